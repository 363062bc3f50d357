//! Key movement: can one interference action relocate a key that stays
//! continuously present, such that an in-flight traversal — dereferencing
//! one edge per tick — walks past it and reports absence? Structures with
//! this defect cannot be protected by locks alone: the traversal holds
//! none, so synthesis must fall back to a deferred-reclamation scheme.

use crate::engine::{explore::replay, ActionEvent, GroundAtom, GroundTerm, TimedState};
use crate::heap::{Dir, HeapState, NodeId, MAX_KEY, MIN_KEY};
use crate::interference::{
    enabled_actions, GuardMode, InterferenceModel, LockSet,
};

#[derive(Debug)]
pub struct KeyMoveWitness {
    pub op: String,
    /// Rendered interference action, e.g. `del{p:h, y:n2, …}`.
    pub action: String,
    /// Tick at which the action fires (0-based; δ holds before it).
    pub fire_tick: usize,
    /// The key that stays present throughout yet gets missed.
    pub key: i64,
    /// Node holding the key when the instantaneous search finds it.
    pub node: String,
    /// The asynchronous cursor's node trail, ending where it gave up.
    pub search_path: Vec<String>,
}

#[derive(Debug)]
pub struct KeyMoveReport {
    pub horizon: usize,
    pub keymove: bool,
    pub witness: Option<KeyMoveWitness>,
    pub checked_ops: Vec<String>,
}

/// How a structure designates its data nodes for search purposes.
#[derive(Clone, Copy, PartialEq, Eq)]
enum DataGuard {
    /// Sorted chain: every interior node is data; search overshoots stop.
    Chain,
    /// Data lives in the leaves; inner nodes only route.
    Leaf,
    /// Every interior node is data; binary routing.
    Node,
}

fn data_guard(theory: &crate::dsl::Theory) -> DataGuard {
    if theory.edge_arity() == 2 {
        DataGuard::Chain
    } else if theory.is_fluent("leaf") {
        DataGuard::Leaf
    } else {
        DataGuard::Node
    }
}

enum SearchStep {
    Found,
    Halt,
    Move(NodeId),
}

fn is_data(state: &HeapState, guard: DataGuard, n: NodeId) -> bool {
    if n.is_sentinel() {
        return false;
    }
    match guard {
        DataGuard::Chain | DataGuard::Node => true,
        DataGuard::Leaf => {
            state.succ(n, Dir::Left) == Some(NodeId::TAIL)
                && state.succ(n, Dir::Right) == Some(NodeId::TAIL)
        }
    }
}

fn search_step(state: &HeapState, guard: DataGuard, at: NodeId, key: i64) -> SearchStep {
    if at == NodeId::TAIL {
        return SearchStep::Halt;
    }
    let Some(here) = state.key(at) else { return SearchStep::Halt };
    if is_data(state, guard, at) && here == key {
        return SearchStep::Found;
    }
    let dir = match guard {
        DataGuard::Chain => {
            if here > key {
                return SearchStep::Halt; // sorted: overshot the key
            }
            Dir::Next
        }
        DataGuard::Leaf | DataGuard::Node => {
            if key < here {
                Dir::Left
            } else {
                Dir::Right
            }
        }
    };
    match state.succ(at, dir) {
        Some(n) => SearchStep::Move(n),
        None => SearchStep::Halt,
    }
}

/// Instantaneous search over one frozen state.
fn oracle_search(state: &HeapState, guard: DataGuard, key: i64) -> Option<NodeId> {
    let mut at = NodeId::HEAD;
    for _ in 0..state.nodes().count() + 2 {
        match search_step(state, guard, at, key) {
            SearchStep::Found => return Some(at),
            SearchStep::Halt => return None,
            SearchStep::Move(n) => at = n,
        }
    }
    None
}

/// Every node the instantaneous key search visits on one frozen state, in
/// visit order, ending at the data node or the halt point. Useful wherever
/// a window must lie where a real traversal would actually walk.
pub fn search_trail(theory: &crate::dsl::Theory, state: &HeapState, key: i64) -> Vec<NodeId> {
    let guard = data_guard(theory);
    let mut at = NodeId::HEAD;
    let mut trail = vec![at];
    for _ in 0..state.nodes().count() + 2 {
        match search_step(state, guard, at, key) {
            SearchStep::Found | SearchStep::Halt => break,
            SearchStep::Move(n) => {
                at = n;
                trail.push(n);
            }
        }
    }
    trail
}

/// One dereference per tick against the trace; after the trace ends the
/// final state stays in force. Returns whether the key was found plus the
/// cursor trail.
fn async_search(trace: &[TimedState], guard: DataGuard, key: i64) -> (bool, Vec<NodeId>) {
    let mut at = NodeId::HEAD;
    let mut path = vec![at];
    let cap = trace.len() + trace.last().map(|t| t.state.nodes().count()).unwrap_or(0) + 4;
    for tick in 0..cap {
        let state = &trace[tick.min(trace.len() - 1)].state;
        match search_step(state, guard, at, key) {
            SearchStep::Found => return (true, path),
            SearchStep::Halt => return (false, path),
            SearchStep::Move(n) => {
                at = n;
                path.push(n);
            }
        }
    }
    (false, path)
}

pub fn task4_keymove(model: &InterferenceModel, delta: &HeapState, horizon: usize) -> KeyMoveReport {
    task4_keymove_with_order(model, delta, horizon, false)
}

/// As [`task4_keymove`], optionally enumerating operations and actions in
/// reverse. The verdict must not depend on enumeration order; tests
/// exercise both directions.
pub fn task4_keymove_with_order(
    model: &InterferenceModel,
    delta: &HeapState,
    horizon: usize,
    reverse: bool,
) -> KeyMoveReport {
    let guard = data_guard(model.theory());
    let mut op_names: Vec<String> = model.ops().iter().map(|o| o.name.clone()).collect();
    if reverse {
        op_names.reverse();
    }
    for op in &op_names {
        // One operation interferes at a time: the traversal races exactly
        // one concurrent writer.
        let restricted = model.restrict(op);
        let mut actions =
            enabled_actions(&restricted, delta, &LockSet::new(), GuardMode::Protocol);
        if reverse {
            actions.reverse();
        }
        for action in actions {
            for fire_tick in 0..horizon {
                let mut events = vec![ActionEvent::Idle; horizon];
                events[fire_tick] = ActionEvent::Interference(action.clone());
                let trace = replay(&restricted, delta, &events);
                // Keys that stay present at every tick; sentinel keys have
                // no data node and are exempt.
                let candidates: Vec<i64> = trace.states[0]
                    .derived
                    .iter()
                    .filter(|a| a.pred == "present")
                    .filter_map(|a| match a.args.first() {
                        Some(GroundTerm::Int(k)) => Some(*k),
                        _ => None,
                    })
                    .filter(|&k| k > MIN_KEY && k < MAX_KEY)
                    .filter(|&k| {
                        let atom = GroundAtom {
                            pred: "present".into(),
                            args: vec![GroundTerm::Int(k)],
                        };
                        trace.states.iter().all(|ts| ts.derived.contains(&atom))
                    })
                    .collect();
                for key in candidates {
                    let oracle = trace
                        .states
                        .iter()
                        .find_map(|ts| oracle_search(&ts.state, guard, key).map(|n| (ts, n)));
                    let Some((ts, node)) = oracle else { continue };
                    let (found, path) = async_search(&trace.states, guard, key);
                    if !found {
                        let names =
                            path.iter().map(|n| trace.last().state.name(*n).to_string());
                        return KeyMoveReport {
                            horizon,
                            keymove: true,
                            witness: Some(KeyMoveWitness {
                                op: op.clone(),
                                action: action.render(delta),
                                fire_tick,
                                key,
                                node: ts.state.name(node).to_string(),
                                search_path: names.collect(),
                            }),
                            checked_ops: op_names.clone(),
                        };
                    }
                }
            }
        }
    }
    KeyMoveReport { horizon, keymove: false, witness: None, checked_ops: op_names }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::builtin_bundle;
    use crate::instance::least_delta;
    use crate::interference::build_interference;

    fn run(bundle: &str, horizon: usize, reverse: bool) -> KeyMoveReport {
        let b = builtin_bundle(bundle).unwrap();
        let d = least_delta(&b, 4).unwrap();
        let model = build_interference(&b);
        task4_keymove_with_order(&model, &d.state, horizon, reverse)
    }

    #[test]
    fn list_keys_never_move() {
        let r = run("linked_list", 4, false);
        assert!(!r.keymove);
        assert!(r.witness.is_none());
    }

    #[test]
    fn external_keys_never_move() {
        let r = run("external_bst", 7, false);
        assert!(!r.keymove);
    }

    #[test]
    fn internal_delete_relocates_the_successor() {
        let r = run("internal_bst", 8, false);
        assert!(r.keymove);
        let w = r.witness.unwrap();
        assert_eq!(w.op, "del");
        assert_eq!(w.key, 30);
        assert_eq!(w.node, "n3");
        // The cursor follows the stale spine past the relocated key.
        assert_eq!(w.search_path, vec!["h", "n2", "n4", "t"]);
    }

    #[test]
    fn verdicts_are_enumeration_order_independent() {
        for (bundle, horizon) in
            [("linked_list", 4), ("external_bst", 7), ("internal_bst", 8)]
        {
            let fwd = run(bundle, horizon, false);
            let rev = run(bundle, horizon, true);
            assert_eq!(fwd.keymove, rev.keymove, "{bundle} verdict changed with order");
        }
    }
}
