//! Environmental interference: every destructive operation block, at every
//! binding its precondition admits, may fire atomically between two ticks
//! of the instrumented thread. Lock sets restrict what may fire, under one
//! of two guard readings.
//!
//! The environment's supply of fresh nodes is bounded: each operation owns
//! a single instance of its fresh symbols, drawn from heap space outside
//! the structure. An insert-like action is enabled only while its
//! operation's fresh nodes are unallocated, so the environment can splice
//! each operation's fresh material in at most once per trajectory —
//! matching an interference theory whose ground universe contains exactly
//! one fresh constant per operation. Delete-like actions bind only
//! existing nodes and stay enabled throughout.

use std::collections::{BTreeMap, BTreeSet};

use crate::dsl::{BlockSpec, Bundle, OperationSpec, Step, Term, Theory};
use crate::engine::{Evaluator, TimedState};
use crate::heap::{Dir, HeapState, NodeId};
use crate::instance::{match_pre_model, Binding};

/// Nodes currently locked. Acquisition order is ascending key, which
/// [`crate::tasks::lock_order`] computes against a concrete state.
pub type LockSet = BTreeSet<NodeId>;

/// How a lock set restricts interference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GuardMode {
    /// Other threads are assumed to follow the same locking protocol: an
    /// action is disabled outright when any node in its own lock window is
    /// held.
    Protocol,
    /// Locks only pin the nodes they name: each link step is disabled
    /// individually when its source node is held, so an action may apply a
    /// strict subset of its steps.
    Literal,
}

impl GuardMode {
    pub fn parse(s: &str) -> Option<GuardMode> {
        match s {
            "protocol" => Some(GuardMode::Protocol),
            "literal" => Some(GuardMode::Literal),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GuardMode::Protocol => "protocol",
            GuardMode::Literal => "literal",
        }
    }
}

/// One ground interference action: an operation block at one binding,
/// carrying the steps it will apply this tick.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterferenceAction {
    pub op: String,
    pub block: String,
    pub block_index: usize,
    pub binding: Binding,
    /// Steps to apply, in block order. Under the literal guard this may be
    /// a strict subset of the block's steps.
    pub effects: Vec<Step>,
    /// Keys solved for the block's fresh symbols; nodes are materialized
    /// for the symbols the effects actually mention.
    pub fresh_keys: BTreeMap<String, i64>,
    /// The nodes this action's own locking discipline would hold; the
    /// protocol guard disables the action when this meets the lock set.
    pub window: BTreeSet<NodeId>,
    pub partial: bool,
}

impl InterferenceAction {
    /// `ins{x:n1, y:t}`, with a step list appended when guarded down to a
    /// subset.
    pub fn render(&self, state: &HeapState) -> String {
        let mut out = format!("{}{}", self.op, self.binding.render(state));
        if self.partial {
            let steps: Vec<String> = self.effects.iter().map(|s| s.to_string()).collect();
            out.push_str(&format!(" [partial: {}]", steps.join(", ")));
        }
        out
    }
}

/// The reified interference theory of one structure: its destructive
/// operation blocks plus the evaluator used to re-check their
/// preconditions at every state.
pub struct InterferenceModel {
    pub evaluator: Evaluator,
    ops: Vec<OperationSpec>,
}

pub fn build_interference(bundle: &Bundle) -> InterferenceModel {
    InterferenceModel {
        evaluator: Evaluator::new(&bundle.theory),
        ops: bundle.knowledge.destructive_ops().cloned().collect(),
    }
}

impl InterferenceModel {
    pub fn theory(&self) -> &Theory {
        self.evaluator.theory()
    }

    pub fn ops(&self) -> &[OperationSpec] {
        &self.ops
    }

    /// The same model with interference restricted to a single operation
    /// (key-movement analysis interferes one operation at a time).
    pub fn restrict(&self, op: &str) -> InterferenceModel {
        InterferenceModel {
            evaluator: Evaluator::new(self.evaluator.theory()),
            ops: self.ops.iter().filter(|o| o.name == op).cloned().collect(),
        }
    }
}

/// Symbols a block's own locking discipline must hold: endpoints of
/// precondition edge atoms that the block's steps invalidate, plus nodes
/// its postcondition unreaches. Fresh symbols are excluded — they are
/// invisible to other threads until linked.
pub fn window_symbols(block: &crate::dsl::BlockSpec) -> BTreeSet<String> {
    let fresh: BTreeSet<&str> = block.fresh.iter().map(|s| s.as_str()).collect();
    let mut out: BTreeSet<String> = BTreeSet::new();
    let mut add = |s: &str| {
        if !fresh.contains(s) {
            out.insert(s.to_string());
        }
    };
    for atom in block.pre_atoms().filter(|a| a.pred == "edge") {
        let (Some(a), Some(b)) = (atom.args[0].sym_name(), atom.args[1].sym_name()) else {
            continue;
        };
        let dir = if atom.args.len() == 3 { atom.args[2].sym_name() } else { None };
        let invalidated = block
            .steps
            .iter()
            .any(|st| st.a == a && st.dir.as_deref() == dir && st.b != b);
        if invalidated {
            add(a);
            add(b);
        }
    }
    for lit in &block.post {
        if let crate::dsl::PostLit::Neg(atom) = lit {
            if atom.pred == "reach" && atom.args.len() == 1 {
                if let Some(s) = atom.args[0].sym_name() {
                    add(s);
                }
            }
        }
    }
    out
}

/// [`window_symbols`] resolved through a binding.
pub fn window_nodes(block: &crate::dsl::BlockSpec, binding: &Binding) -> BTreeSet<NodeId> {
    window_symbols(block)
        .iter()
        .filter_map(|s| match s.as_str() {
            "h" => Some(NodeId::HEAD),
            "t" => Some(NodeId::TAIL),
            _ => binding.nodes.get(s).copied(),
        })
        .collect()
}

/// The heap name of an operation's pooled fresh node for one symbol.
/// Presence of this name in a state means the pool instance is spent.
pub fn pool_node_name(op: &str, sym: &str) -> String {
    format!("m_{op}_{sym}")
}

/// The block's fresh symbols that a step list actually links — these are
/// the ones firing would materialize.
fn materialized_syms<'a>(block: &'a BlockSpec, effects: &[Step]) -> Vec<&'a str> {
    block
        .fresh
        .iter()
        .map(|s| s.as_str())
        .filter(|s| effects.iter().any(|st| st.a == *s || st.b == *s))
        .collect()
}

/// All interference actions enabled at a state under the lock set,
/// deterministically ordered by (operation, block, binding).
pub fn enabled_actions(
    model: &InterferenceModel,
    state: &HeapState,
    locks: &LockSet,
    guard: GuardMode,
) -> Vec<InterferenceAction> {
    let timed = TimedState::new(&model.evaluator, state.clone());
    enabled_actions_model(model, &timed, locks, guard)
}

/// As [`enabled_actions`], against a state whose least model is already
/// computed.
pub fn enabled_actions_model(
    model: &InterferenceModel,
    timed: &TimedState,
    locks: &LockSet,
    guard: GuardMode,
) -> Vec<InterferenceAction> {
    let derived = &timed.derived;
    let mut out = Vec::new();
    for op in &model.ops {
        for (block_index, block) in op.blocks.iter().enumerate() {
            for binding in match_pre_model(model.theory(), derived, block, None) {
                let window = window_nodes(block, &binding);
                let effects: Vec<Step> = match guard {
                    GuardMode::Protocol => {
                        if !locks.is_disjoint(&window) {
                            continue;
                        }
                        block.steps.clone()
                    }
                    GuardMode::Literal => block
                        .steps
                        .iter()
                        .filter(|st| {
                            let src = resolve_symbol(&st.a, &binding);
                            src.map(|n| !locks.contains(&n)).unwrap_or(true)
                        })
                        .cloned()
                        .collect(),
                };
                if effects.is_empty() {
                    continue;
                }
                // Bounded fresh supply: skip when any fresh node this
                // firing would materialize is already allocated.
                let spent = materialized_syms(block, &effects)
                    .iter()
                    .any(|sym| timed.state.node_by_name(&pool_node_name(&op.name, sym)).is_some());
                if spent {
                    continue;
                }
                debug_assert!(
                    pre_holds_without_fresh(block, derived, &binding),
                    "enabled action whose precondition fails: {}.{}",
                    op.name,
                    block.name
                );
                let partial = effects.len() < block.steps.len();
                let fresh_keys = fresh_key_map(block, &binding);
                out.push(InterferenceAction {
                    op: op.name.clone(),
                    block: block.name.clone(),
                    block_index,
                    binding,
                    effects,
                    fresh_keys,
                    window,
                    partial,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        (&a.op, a.block_index, &a.binding).cmp(&(&b.op, b.block_index, &b.binding))
    });
    out
}

fn resolve_symbol(sym: &str, binding: &Binding) -> Option<NodeId> {
    match sym {
        "h" => Some(NodeId::HEAD),
        "t" => Some(NodeId::TAIL),
        _ => binding.nodes.get(sym).copied(),
    }
}

fn fresh_key_map(block: &crate::dsl::BlockSpec, binding: &Binding) -> BTreeMap<String, i64> {
    let fresh: BTreeSet<&str> = block.fresh.iter().map(|s| s.as_str()).collect();
    let mut out = BTreeMap::new();
    for atom in block.pre_atoms().filter(|a| a.pred == "key" && a.args.len() == 2) {
        if let (Term::Sym(s), Term::Var(v)) = (&atom.args[0], &atom.args[1]) {
            if fresh.contains(s.as_str()) {
                if let Some(&k) = binding.keys.get(v) {
                    out.insert(s.clone(), k);
                }
            }
        }
    }
    out
}

fn pre_holds_without_fresh(
    block: &crate::dsl::BlockSpec,
    derived: &BTreeSet<crate::engine::GroundAtom>,
    binding: &Binding,
) -> bool {
    let fresh: BTreeSet<&str> = block.fresh.iter().map(|s| s.as_str()).collect();
    block.pre.iter().all(|item| {
        let mentions_fresh = match item {
            crate::dsl::BodyItem::Pos(a) | crate::dsl::BodyItem::Neg(a) => a
                .args
                .iter()
                .any(|t| matches!(t, Term::Sym(s) if fresh.contains(s.as_str()))),
            crate::dsl::BodyItem::Cmp(_) => false,
        };
        mentions_fresh || crate::engine::holds(item, derived, binding).unwrap_or(false)
    })
}

/// Apply an interference action atomically: materialize the operation's
/// pooled fresh nodes for the symbols the effects mention, write every
/// effect's edge, and tick the clock once.
pub fn apply_action(state: &HeapState, action: &InterferenceAction) -> HeapState {
    let mut next = state.clone();
    let mut local: BTreeMap<String, NodeId> = BTreeMap::new();
    for (sym, key) in &action.fresh_keys {
        let used = action.effects.iter().any(|st| st.a == *sym || st.b == *sym);
        if used {
            local.insert(sym.clone(), next.add_node(pool_node_name(&action.op, sym), *key));
        }
    }
    for step in &action.effects {
        let resolve = |s: &str| {
            local
                .get(s)
                .copied()
                .or_else(|| resolve_symbol(s, &action.binding))
                .unwrap_or_else(|| panic!("interference step symbol `{s}` unbound"))
        };
        let a = resolve(&step.a);
        let b = resolve(&step.b);
        debug_assert!(a != NodeId::TAIL, "interference must not modify the tail sentinel");
        let dir = step
            .dir
            .as_deref()
            .and_then(Dir::parse)
            .unwrap_or(Dir::Next);
        next.set_succ(a, dir, b);
    }
    next.clock = state.clock + 1;
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::builtin_bundle;
    use crate::instance::least_delta;

    #[test]
    fn list_delta_has_three_unguarded_actions() {
        let b = builtin_bundle("linked_list").unwrap();
        let d = least_delta(&b, 4).unwrap();
        let model = build_interference(&b);
        let actions = enabled_actions(&model, &d.state, &LockSet::new(), GuardMode::Protocol);
        let rendered: Vec<String> = actions.iter().map(|a| a.render(&d.state)).collect();
        assert_eq!(
            rendered,
            vec!["del{x:h, y:n1, z:t}", "ins{x:n1, y:t}", "ins{x:h, y:n1}"]
        );
    }

    #[test]
    fn protocol_guard_blocks_overlapping_windows() {
        let b = builtin_bundle("linked_list").unwrap();
        let d = least_delta(&b, 4).unwrap();
        let model = build_interference(&b);
        let n1 = d.state.node_by_name("n1").unwrap();
        let locks: LockSet = [NodeId::HEAD, n1].into_iter().collect();
        // Windows: del {h,n1}, ins@(n1,t) {n1,t}, ins@(h,n1) {h,n1} — all
        // intersect {h,n1}.
        let actions = enabled_actions(&model, &d.state, &locks, GuardMode::Protocol);
        assert!(actions.is_empty());
    }

    #[test]
    fn literal_guard_leaves_partial_effects() {
        let b = builtin_bundle("linked_list").unwrap();
        let d = least_delta(&b, 4).unwrap();
        let model = build_interference(&b);
        let n1 = d.state.node_by_name("n1").unwrap();
        let locks: LockSet = [n1].into_iter().collect();
        let actions = enabled_actions(&model, &d.state, &locks, GuardMode::Literal);
        // del links from h (unlocked): full. ins@(n1,t): only link(tau,y)
        // survives, a partial splice. ins@(h,n1): both steps survive.
        let rendered: Vec<String> = actions.iter().map(|a| a.render(&d.state)).collect();
        assert_eq!(
            rendered,
            vec![
                "del{x:h, y:n1, z:t}",
                "ins{x:n1, y:t} [partial: link(tau,y)]",
                "ins{x:h, y:n1}"
            ]
        );
    }

    #[test]
    fn insert_materializes_midpoint_key_node() {
        let b = builtin_bundle("linked_list").unwrap();
        let d = least_delta(&b, 4).unwrap();
        let model = build_interference(&b);
        let actions = enabled_actions(&model, &d.state, &LockSet::new(), GuardMode::Protocol);
        let ins = actions.iter().find(|a| a.op == "ins").unwrap();
        let next = apply_action(&d.state, ins);
        let m = next.node_by_key(505).expect("fresh node with midpoint key");
        assert_eq!(next.name(m), "m_ins_tau");
        let n1 = next.node_by_name("n1").unwrap();
        assert_eq!(next.succ(n1, Dir::Next), Some(m));
        assert_eq!(next.succ(m, Dir::Next), Some(NodeId::TAIL));
        assert_eq!(next.clock, d.state.clock + 1);
    }

    #[test]
    fn environment_insert_fires_once_per_trajectory() {
        let b = builtin_bundle("linked_list").unwrap();
        let d = least_delta(&b, 4).unwrap();
        let model = build_interference(&b);
        let actions = enabled_actions(&model, &d.state, &LockSet::new(), GuardMode::Protocol);
        let ins = actions.iter().find(|a| a.op == "ins").unwrap();
        let next = apply_action(&d.state, ins);
        // The op's fresh node is spent: only deletes remain (now two, since
        // the freshly spliced node is itself a delete candidate).
        let after = enabled_actions(&model, &next, &LockSet::new(), GuardMode::Protocol);
        assert!(after.iter().all(|a| a.op == "del"));
        assert_eq!(after.len(), 2);
    }

    #[test]
    fn delete_relinks_without_materializing() {
        let b = builtin_bundle("linked_list").unwrap();
        let d = least_delta(&b, 4).unwrap();
        let model = build_interference(&b);
        let actions = enabled_actions(&model, &d.state, &LockSet::new(), GuardMode::Protocol);
        let del = actions.iter().find(|a| a.op == "del").unwrap();
        let next = apply_action(&d.state, del);
        assert_eq!(next.succ(NodeId::HEAD, Dir::Next), Some(NodeId::TAIL));
        assert_eq!(next.interior_nodes().count(), 1, "victim stays allocated, orphaned");
    }

    #[test]
    fn windows_match_lock_heuristic_expectations() {
        for (bundle, op, expect) in [
            ("linked_list", "ins", vec!["x", "y"]),
            ("linked_list", "del", vec!["x", "y"]),
            ("internal_bst", "ins", vec!["t", "u"]),
            ("internal_bst", "del", vec!["p", "r", "s", "t", "y"]),
            ("external_bst", "ins", vec!["l", "u"]),
            ("external_bst", "del", vec!["g", "l", "p"]),
        ] {
            let b = builtin_bundle(bundle).unwrap();
            let block = &b.knowledge.op(op).unwrap().blocks[0];
            let syms: Vec<String> = window_symbols(block).into_iter().collect();
            assert_eq!(syms, expect, "{bundle}.{op} window");
        }
    }
}
