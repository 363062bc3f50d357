//! The whole pipeline in one call: find the least instance, run the four
//! analyses for every operation, and either emit a lock-based skeleton or
//! recommend a copy-based fallback with the deciding evidence. The three
//! built-in structures span the interesting outcomes: observers pass
//! through unchanged, list and external-tree updates synthesize, and the
//! internal tree's delete is refused because it moves keys.

use cds::codegen::{render_text, synthesize, OpOutcome, SynthConfig};
use cds::dsl::builtin_bundle;

fn main() {
    for name in ["linked_list", "external_bst", "internal_bst"] {
        let bundle = builtin_bundle(name).expect("builtin parses");
        let report = synthesize(&bundle, &SynthConfig::default()).expect("pipeline runs");
        println!("== {name} ==");
        for (op, outcome) in report.outcome_matrix() {
            println!("  {op}: {outcome}");
        }
        for op in &report.ops {
            if let OpOutcome::Rcu(rcu) = &op.outcome {
                println!("  {} fell back ({}): {}", op.op, rcu.cause.as_str(), rcu.summary);
            }
        }
        println!();
    }

    // The generated artifact for a list insert: lock the window in key
    // order, re-check only what rivals could have falsified, run the steps
    // in the proven order, release.
    let bundle = builtin_bundle("linked_list").expect("builtin parses");
    let report = synthesize(&bundle, &SynthConfig::default()).expect("pipeline runs");
    let ins = report.op("ins").expect("ins synthesized");
    let code = ins.outcome.code().expect("ins is a success");
    println!("{}", render_text(code));
}
