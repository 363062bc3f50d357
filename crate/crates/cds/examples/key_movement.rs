//! The lock-killer: can a rival relocate a key that never stops being
//! present, so that an in-flight traversal — dereferencing one edge per
//! tick, holding no locks — walks right past it? Chains and external trees
//! move no keys, so locks suffice. An internal tree's delete relocates the
//! in-order successor upward; a search descending toward that key can miss
//! it even though it is present at every instant, and no lock the writer
//! takes can protect a reader that locks nothing. Synthesis must fall back
//! to a copy-based scheme there.

use cds::dsl::builtin_bundle;
use cds::instance::least_delta;
use cds::interference::build_interference;
use cds::tasks::task4_keymove;

fn main() {
    for name in ["linked_list", "external_bst", "internal_bst"] {
        let bundle = builtin_bundle(name).expect("builtin parses");
        let delta = least_delta(&bundle, 4).expect("delta exists");
        let model = build_interference(&bundle);
        // Race each destructive operation's interference against the
        // traversal, one writer at a time, like synthesis does.
        let mut moved = None;
        for op in delta.choices.keys() {
            let report = task4_keymove(&model.restrict(op), &delta.state, 4);
            if report.keymove {
                moved = Some(report);
                break;
            }
        }
        match moved {
            None => println!("{name}: no key movement at horizon 4 — locks can work"),
            Some(report) => {
                let w = report.witness.expect("keymove carries a witness");
                println!("{name}: key movement — locks cannot protect readers");
                println!("  one {} at tick {} relocates key {} to {}", w.op, w.fire_tick, w.key, w.node);
                println!("  the searcher walked {:?} and never saw it", w.search_path);
            }
        }
    }
}
