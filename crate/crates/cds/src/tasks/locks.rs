//! Lock-set adequacy: does holding a given set of nodes stop interference
//! from falsifying any precondition conjunct of the block being protected?

use crate::dsl::BlockSpec;
use crate::engine::Trajectory;
use crate::heap::{HeapState, NodeId};
use crate::instance::Binding;
use crate::interference::{window_nodes, GuardMode, InterferenceModel, LockSet};

use super::falsify::falsification_scan;

/// The candidate lock set for a block: endpoints of the precondition edges
/// its steps invalidate, plus every node its postcondition unreaches.
/// Fresh nodes are excluded — nobody else can see them yet.
pub fn window_heuristic(block: &BlockSpec, binding: &Binding) -> LockSet {
    window_nodes(block, binding)
}

/// Lock acquisition order: ascending key. Deadlock-freedom across threads
/// follows from every thread ordering its acquisitions the same way.
pub fn lock_order(locks: &LockSet, state: &HeapState) -> Vec<NodeId> {
    let mut order: Vec<NodeId> = locks.iter().copied().collect();
    order.sort_by_key(|n| (state.key(*n), n.0));
    order
}

#[derive(Debug)]
pub struct AdequacyReport {
    pub op: String,
    pub block: String,
    pub binding: Binding,
    pub locks: LockSet,
    pub guard: GuardMode,
    pub horizon: usize,
    pub adequate: bool,
    /// The first conjunct guarded interference still falsifies, with a
    /// replayable trajectory — present exactly when inadequate.
    pub violated: Option<String>,
    pub witness: Option<Trajectory>,
}

/// A lock set is adequate when no interference trajectory under it
/// falsifies any fluent conjunct of the block's precondition.
pub fn task2_adequacy(
    model: &InterferenceModel,
    op: &str,
    block: &BlockSpec,
    delta: &HeapState,
    binding: &Binding,
    locks: &LockSet,
    guard: GuardMode,
    horizon: usize,
) -> AdequacyReport {
    let verdicts = falsification_scan(model, delta, block, binding, horizon, locks, guard);
    let broken = verdicts.into_iter().find(|v| v.falsifiable);
    AdequacyReport {
        op: op.to_string(),
        block: block.name.clone(),
        binding: binding.clone(),
        locks: locks.clone(),
        guard,
        horizon,
        adequate: broken.is_none(),
        violated: broken.as_ref().map(|v| v.literal.clone()),
        witness: broken.and_then(|v| v.witness),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::builtin_bundle;
    use crate::instance::least_delta;
    use crate::interference::build_interference;

    struct Fixture {
        bundle: crate::dsl::Bundle,
        delta: crate::instance::DeltaResult,
        model: InterferenceModel,
    }

    fn fixture(name: &str) -> Fixture {
        let bundle = builtin_bundle(name).unwrap();
        let delta = least_delta(&bundle, 4).unwrap();
        let model = build_interference(&bundle);
        Fixture { bundle, delta, model }
    }

    fn adequacy(f: &Fixture, op: &str, locks: &LockSet, guard: GuardMode) -> AdequacyReport {
        let choice = &f.delta.choices[op];
        let block = &f.bundle.knowledge.op(op).unwrap().blocks[choice.block_index];
        let horizon = block.steps.len() + 2;
        task2_adequacy(
            &f.model,
            op,
            block,
            &f.delta.state,
            &choice.binding,
            locks,
            guard,
            horizon,
        )
    }

    #[test]
    fn heuristic_locks_are_adequate_for_list_insert() {
        let f = fixture("linked_list");
        let choice = &f.delta.choices["ins"];
        let block = &f.bundle.knowledge.op("ins").unwrap().blocks[0];
        let locks = window_heuristic(block, &choice.binding);
        let n1 = f.delta.state.node_by_name("n1").unwrap();
        assert_eq!(locks, [n1, NodeId::TAIL].into_iter().collect::<LockSet>());
        let r = adequacy(&f, "ins", &locks, GuardMode::Protocol);
        assert!(r.adequate);
        assert!(r.witness.is_none());
    }

    #[test]
    fn empty_lock_set_is_inadequate_for_list_insert() {
        let f = fixture("linked_list");
        let r = adequacy(&f, "ins", &LockSet::new(), GuardMode::Protocol);
        assert!(!r.adequate);
        // The environment deletes n1 out from under the insert window.
        assert_eq!(r.violated.as_deref(), Some("reach(x)"));
        assert!(r.witness.is_some());
    }

    #[test]
    fn partial_window_fails_under_literal_guard() {
        let f = fixture("linked_list");
        let n1 = f.delta.state.node_by_name("n1").unwrap();
        let only_x: LockSet = [n1].into_iter().collect();
        // Protocol reading: every action's window touches n1 on this δ, so
        // {x} alone already silences interference.
        let r = adequacy(&f, "ins", &only_x, GuardMode::Protocol);
        assert!(r.adequate);
        // Literal reading: the delete's single step writes h, which is not
        // held, so it still fires and unreaches x.
        let r = adequacy(&f, "ins", &only_x, GuardMode::Literal);
        assert!(!r.adequate);
        assert_eq!(r.violated.as_deref(), Some("reach(x)"));
    }

    #[test]
    fn lock_monotonicity_on_delta() {
        // Protocol reading: growing an adequate set never breaks adequacy,
        // because every action's window check only gets stricter. Checked
        // over the whole lattice of lock sets on δ. (No such law holds for
        // the literal reading: locking one source node of a multi-step
        // block yields new partial behaviors.)
        let f = fixture("linked_list");
        let nodes: Vec<NodeId> = f.delta.state.nodes().collect();
        let mut adequate_sets: Vec<LockSet> = Vec::new();
        let mut inadequate_sets: Vec<LockSet> = Vec::new();
        for mask in 0..(1u32 << nodes.len()) {
            let locks: LockSet = nodes
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, n)| *n)
                .collect();
            if adequacy(&f, "ins", &locks, GuardMode::Protocol).adequate {
                adequate_sets.push(locks);
            } else {
                inadequate_sets.push(locks);
            }
        }
        for small in &adequate_sets {
            for large in &inadequate_sets {
                assert!(
                    !small.is_subset(large),
                    "monotonicity violated: {small:?} adequate but superset {large:?} is not"
                );
            }
        }
        // On this δ the adequate sets are exactly the hitting sets of the
        // three action windows {h,n1}, {n1,t}, {h,n1}: hold n1, or h and t.
        let n1 = f.delta.state.node_by_name("n1").unwrap();
        let hits = |l: &LockSet| {
            l.contains(&n1) || (l.contains(&NodeId::HEAD) && l.contains(&NodeId::TAIL))
        };
        assert!(adequate_sets.iter().all(hits));
        assert!(!inadequate_sets.iter().any(hits));

        // Literal reading, concrete datum: the full node set silences every
        // step that could touch the shared structure.
        let all: LockSet = nodes.iter().copied().collect();
        assert!(adequacy(&f, "ins", &all, GuardMode::Literal).adequate);
    }

    #[test]
    fn heuristic_adequate_for_every_builtin_destructive_op() {
        for name in ["linked_list", "external_bst", "internal_bst"] {
            let f = fixture(name);
            for (op, choice) in &f.delta.choices {
                let block = &f.bundle.knowledge.op(op).unwrap().blocks[choice.block_index];
                let locks = window_heuristic(block, &choice.binding);
                let r = adequacy(&f, op, &locks, GuardMode::Protocol);
                assert!(r.adequate, "{name}.{op} heuristic locks inadequate: {:?}", r.violated);
            }
        }
    }

    #[test]
    fn lock_order_is_ascending_by_key() {
        let f = fixture("linked_list");
        let n1 = f.delta.state.node_by_name("n1").unwrap();
        let locks: LockSet = [NodeId::TAIL, NodeId::HEAD, n1].into_iter().collect();
        let order = lock_order(&locks, &f.delta.state);
        assert_eq!(order, vec![NodeId::HEAD, n1, NodeId::TAIL]);
    }
}
