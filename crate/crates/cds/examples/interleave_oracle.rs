//! Trust, then verify: run the synthesized skeletons as real threads over
//! every interleaving of their micro-steps and audit what the analyses
//! promised — the structural invariant everywhere, mutual exclusion, the
//! immunity of unfalsifiable conjuncts, the protection of validated ones,
//! and linearizability of every final state. Then sabotage the insert's
//! step order and watch the oracle produce a replayable counterexample.

use cds::codegen::{synthesize, SynthConfig};
use cds::dsl::builtin_bundle;
use cds::oracle::{explore, run_schedule, Harness, ThreadSpec};

fn main() {
    let bundle = builtin_bundle("linked_list").expect("builtin parses");
    let report = synthesize(&bundle, &SynthConfig::default()).expect("pipeline runs");
    let delta = report.delta.clone();
    let ins = report.op("ins").unwrap().outcome.code().unwrap().clone();
    let del = report.op("del").unwrap().outcome.code().unwrap().clone();

    // An insert racing the delete of its left neighbor: every schedule.
    let harness = Harness::new(
        &bundle,
        &delta,
        &[ThreadSpec { ir: ins.clone(), key: Some(500) }, ThreadSpec { ir: del, key: Some(10) }],
    )
    .expect("programs compile against the knowledge base");
    let verdict = explore(&harness, 200_000).expect("exploration fits the budget");
    println!("ins(500) ∥ del(10) over every schedule:");
    println!(
        "  invariant {} · mutual exclusion {} · unfalsifiable stable {} · validated protected {} · linearizable {}",
        verdict.invariant_ok,
        verdict.mutual_exclusion_ok,
        verdict.lemma1_ok,
        verdict.lemma2_ok,
        verdict.linearizable
    );
    println!(
        "  {} configurations, {} transitions, {} final states\n",
        verdict.stats.configurations, verdict.stats.transitions, verdict.stats.final_states
    );

    // Flip the insert's two link steps: the spliced node briefly points
    // nowhere, and the very first schedule that reaches it breaks the list.
    let mut broken = ins;
    broken.steps.reverse();
    let harness =
        Harness::new(&bundle, &delta, &[ThreadSpec { ir: broken, key: Some(500) }]).unwrap();
    let verdict = explore(&harness, 200_000).expect("exploration fits the budget");
    let ce = verdict.counterexample.expect("the broken order must be caught");
    println!("sabotaged step order: {} violated — {}", ce.check, ce.detail);
    let (trace, _) = run_schedule(&harness, &delta, &ce.schedule).expect("replay is deterministic");
    for event in &trace.events {
        println!("  t{} {}", event.thread, event.action);
    }
    let end = trace.events.last().expect("non-empty trace");
    println!("  heap at the violation:");
    for fact in &end.facts {
        println!("    {fact}");
    }
}
