//! In what order may an operation's link steps run so that the structure
//! stays well-formed at every intermediate state? The ordering search
//! tries every permutation on the least instance and keeps the survivors.
//! A sorted list insert must publish the fresh node's outgoing edge before
//! splicing it in — the declared order ⟨1,2⟩ leaves the list broken in
//! between, and the rejection carries that broken heap as evidence.

use cds::dsl::builtin_bundle;
use cds::engine::Evaluator;
use cds::instance::least_delta;
use cds::tasks::task3_program_order;

fn main() {
    for (structure, op_name) in
        [("linked_list", "ins"), ("linked_list", "del"), ("internal_bst", "del")]
    {
        let bundle = builtin_bundle(structure).expect("builtin parses");
        let delta = least_delta(&bundle, 4).expect("delta exists");
        let evaluator = Evaluator::new(&bundle.theory);
        let choice = &delta.choices[op_name];
        let op = bundle.knowledge.op(op_name).expect("known op");
        let block = &op.blocks[choice.block_index];

        let report = task3_program_order(&evaluator, op_name, block, &delta.state, &choice.binding);
        println!("== {structure} {op_name}: {} step(s) ==", block.steps.len());
        for (i, step) in block.steps.iter().enumerate() {
            println!("  step {}: {step}", i + 1);
        }
        println!(
            "  valid orders: {:?} ({} rejected)",
            report.valid,
            report.rejected.len()
        );
        if let Some(rejection) = report.rejected.first() {
            println!(
                "  order {:?} fails after step {} — {} no longer holds:",
                rejection.order, rejection.failed_after, rejection.violation
            );
            for fact in &rejection.state {
                println!("    {fact}");
            }
        }
        println!();
    }
}
