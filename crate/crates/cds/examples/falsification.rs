//! Which precondition conjuncts can rival operations falsify while this
//! one is in flight? The falsification scan answers per conjunct, with a
//! replayable interference trajectory for each falsifiable one. The
//! unfalsifiable remainder is what generated code may validate once and
//! then trust — here, a sorted list insert only ever needs to re-check
//! `reach(x)` and `edge(x,y)`, never `suffix(y)`.

use cds::dsl::builtin_bundle;
use cds::instance::least_delta;
use cds::interference::build_interference;
use cds::tasks::task1_unfalsify;

fn main() {
    let bundle = builtin_bundle("linked_list").expect("builtin parses");
    let delta = least_delta(&bundle, 4).expect("delta exists");
    let model = build_interference(&bundle);

    for op_name in ["ins", "del"] {
        let choice = &delta.choices[op_name];
        let op = bundle.knowledge.op(op_name).expect("known op");
        let block = &op.blocks[choice.block_index];
        let horizon = block.steps.len() + 2;
        let report =
            task1_unfalsify(&model, op_name, block, &delta.state, &choice.binding, horizon);

        println!("== {op_name} {} at {} ==", block.name, report.binding.render(&delta.state));
        for verdict in &report.verdicts {
            if verdict.falsifiable {
                let witness = verdict.witness.as_ref().expect("falsifiable has a witness");
                println!(
                    "  {} (ground {}): falsifiable in {} tick(s)",
                    verdict.literal,
                    verdict.ground,
                    witness.events.len()
                );
                // The witness is a concrete trajectory: replay its final
                // state and watch the conjunct fail.
                let end = witness.last();
                let still_holds = end
                    .derived
                    .iter()
                    .any(|g| g.render(&end.state) == verdict.ground);
                assert!(!still_holds, "witness must falsify the conjunct");
                println!("    after interference the heap is:");
                for fact in end.state.facts() {
                    println!("      {fact}");
                }
            } else {
                println!("  {} (ground {}): unfalsifiable", verdict.literal, verdict.ground);
            }
        }
        println!("  validate-and-trust set: {:?}\n", report.unfalsify());
    }
}
