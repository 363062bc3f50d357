//! Counts the interference state spaces the reasoning tasks explore:
//! for each builtin structure and each destructive operation, the number
//! of distinct heap states reachable within the task's default horizon
//! when nothing is locked. Useful for judging how hard a falsification
//! scan is before running it.

use std::time::Instant;

use cds::dsl::builtin_bundle;
use cds::engine::explore_states;
use cds::instance::least_delta;
use cds::interference::{build_interference, GuardMode, LockSet};

fn main() {
    for name in ["linked_list", "external_bst", "internal_bst"] {
        let bundle = builtin_bundle(name).expect("builtin parses");
        let delta = least_delta(&bundle, 4).expect("delta exists");
        let model = build_interference(&bundle);
        for horizon in 1..=6 {
            let t0 = Instant::now();
            let graph = explore_states(
                &delta.state,
                &model,
                horizon,
                &LockSet::new(),
                GuardMode::Protocol,
            );
            println!(
                "{name:>12} horizon {horizon}: {:>8} states, {:>9} transitions, {:?}",
                graph.states.len(),
                graph.transitions.len(),
                t0.elapsed(),
            );
        }
    }
}
