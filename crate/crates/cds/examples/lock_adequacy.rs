//! Are these locks enough? A lock set is adequate for an operation when no
//! rival action that respects the locks can falsify the operation's
//! precondition within the horizon. This example checks the window
//! heuristic's locks (adequate for list insert and delete), then shows two
//! failure modes: locking nothing, and locking only the delete's upstream
//! node — each with a concrete interfering trajectory as the witness.

use cds::dsl::builtin_bundle;
use cds::heap::NodeId;
use cds::instance::least_delta;
use cds::interference::{build_interference, GuardMode, LockSet};
use cds::tasks::{task2_adequacy, window_heuristic};

fn main() {
    let bundle = builtin_bundle("linked_list").expect("builtin parses");
    let delta = least_delta(&bundle, 4).expect("delta exists");
    let model = build_interference(&bundle);

    for op_name in ["ins", "del"] {
        let choice = &delta.choices[op_name];
        let op = bundle.knowledge.op(op_name).expect("known op");
        let block = &op.blocks[choice.block_index];
        let horizon = block.steps.len() + 2;

        let cases: [(&str, LockSet); 3] = [
            ("window locks", window_heuristic(block, &choice.binding)),
            ("no locks", LockSet::new()),
            ("head only", [NodeId::HEAD].into_iter().collect()),
        ];
        for (label, locks) in cases {
            let report = task2_adequacy(
                &model,
                op_name,
                block,
                &delta.state,
                &choice.binding,
                &locks,
                GuardMode::Protocol,
                horizon,
            );
            let names: Vec<&str> =
                locks.iter().map(|&n| delta.state.name(n)).collect();
            if report.adequate {
                println!("{op_name} with {label} [{}]: adequate", names.join(", "));
            } else {
                let violated = report.violated.as_ref().expect("inadequate names a conjunct");
                let witness = report.witness.as_ref().expect("inadequate has a witness");
                println!(
                    "{op_name} with {label} [{}]: inadequate — a rival falsifies {violated} \
                     in {} tick(s) without touching any lock",
                    names.join(", "),
                    witness.events.len()
                );
            }
        }
        println!();
    }
}
