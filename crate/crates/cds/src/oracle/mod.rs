//! Brute-force validation of synthesized skeletons: run them as thread
//! programs over every interleaving of their micro-steps and check what
//! the reasoning tasks promised — the structural invariant at every state,
//! mutual exclusion, that unfalsifiable conjuncts never get falsified,
//! that no rival falsifies a validated precondition inside a critical
//! section, and that every final state linearizes.
//!
//! A thread's micro-steps are each atomic: resolve the window against the
//! live heap, acquire one lock at a time in the skeleton's order, validate
//! once, apply one link step at a time, release one lock at a time in
//! reverse. Failed validation releases what is held and halts with the
//! heap untouched; a window that no longer exists halts the thread as a
//! no-op, exactly like a traversal that comes up empty.

pub mod explore;

pub use explore::{
    explore, linearization_exists, run_schedule, CounterExample, ExploreStats, Trace, Verdict,
};

use std::collections::BTreeMap;

use crate::codegen::CodeIR;
use crate::dsl::{BlockSpec, BodyItem, Bundle, Term};
use crate::engine::{
    apply_step, ground_with_binding, holds, Evaluator, GroundAtom,
};
use crate::heap::{HeapState, NodeId};
use crate::instance::{least_delta, match_pre, match_pre_with_key, Binding};
use crate::interference::build_interference;
use crate::tasks::{search_trail, task1_unfalsify};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("code references operation `{0}`, which the knowledge base lacks")]
    MissingOp(String),
    #[error("operation `{op}` has no block named `{block}`")]
    MissingBlock { op: String, block: String },
    #[error("validate literal `{0}` matches no precondition conjunct")]
    UnknownValidateLiteral(String),
    #[error("lock symbol `{0}` is not bound by the precondition")]
    UnknownLockSymbol(String),
    #[error("state-space budget exceeded after {visited} configurations (partial coverage)")]
    BudgetExceeded { visited: usize },
    #[error("schedule names thread {thread} at tick {tick}, but it is not runnable")]
    InvalidSchedule { tick: usize, thread: usize },
}

/// What one thread should run: a synthesized skeleton, optionally pinned
/// to a key (the inserted or deleted value). Without a pin the thread
/// takes the first window the live state offers, solving fresh keys to
/// gap midpoints.
#[derive(Clone, Debug)]
pub struct ThreadSpec {
    pub ir: CodeIR,
    pub key: Option<i64>,
}

/// Where a thread stands in its micro-step sequence.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Resolve,
    Acquire(usize),
    Validate,
    Step(usize),
    Release(usize),
    /// Validation failed; release the newest `usize` locks still held.
    Abort(usize),
    Done,
}

/// How a finished thread ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Completion {
    Running,
    /// Ran every step.
    Completed,
    /// No window at resolve time; the heap was never touched.
    NoWindow,
    /// Validation failed; the heap was never touched by this thread.
    Aborted,
}

/// Static per-thread program: the skeleton compiled against its block.
pub struct ThreadProgram {
    pub id: usize,
    pub op: String,
    pub block: BlockSpec,
    /// Validate conjuncts as precondition items, in skeleton order.
    validate_items: Vec<BodyItem>,
    /// Lock symbols in acquisition order.
    lock_syms: Vec<String>,
    /// Link steps in skeleton order.
    steps: Vec<crate::dsl::Step>,
    /// Symbolic literals whose ground instances the falsification task
    /// proved interference-proof; watched globally once resolved.
    unfalsify: Vec<String>,
    key: Option<i64>,
}

/// Dynamic per-thread state.
#[derive(Clone, Debug)]
pub struct ThreadState {
    pub phase: Phase,
    pub completion: Completion,
    pub binding: Option<Binding>,
    /// Lock nodes in acquisition order, resolved at resolve time.
    pub lock_nodes: Vec<NodeId>,
    /// Ground precondition fluents snapshot at validate success, watched
    /// against rival falsification until the last link step.
    pub protected: Vec<(GroundAtom, bool)>,
    /// Ground unfalsifiable conjuncts, watched from resolve to the end.
    pub unfalsify_ground: Vec<GroundAtom>,
}

impl ThreadState {
    fn new() -> Self {
        ThreadState {
            phase: Phase::Resolve,
            completion: Completion::Running,
            binding: None,
            lock_nodes: Vec::new(),
            protected: Vec::new(),
            unfalsify_ground: Vec::new(),
        }
    }

    /// Inside the window Lemma 2 protects: validated, last link not done.
    pub fn in_critical_section(&self) -> bool {
        matches!(self.phase, Phase::Step(_))
    }
}

/// Shared executor state: the heap plus who holds which lock.
#[derive(Clone, Debug)]
pub struct World {
    pub state: HeapState,
    pub locks: BTreeMap<NodeId, usize>,
    pub threads: Vec<ThreadState>,
}

impl World {
    pub fn start(state: &HeapState, count: usize) -> World {
        World {
            state: state.clone(),
            locks: BTreeMap::new(),
            threads: (0..count).map(|_| ThreadState::new()).collect(),
        }
    }

    pub fn all_done(&self) -> bool {
        self.threads.iter().all(|t| t.phase == Phase::Done)
    }
}

/// Compile thread specs against a bundle. The unfalsifiable sets are
/// computed once per operation by the falsification task on the given
/// start state, at the default horizon.
pub struct Harness {
    pub evaluator: Evaluator,
    pub programs: Vec<ThreadProgram>,
    pub start: HeapState,
}

impl Harness {
    pub fn new(
        bundle: &Bundle,
        start: &HeapState,
        specs: &[ThreadSpec],
    ) -> Result<Harness, OracleError> {
        let evaluator = Evaluator::new(&bundle.theory);
        let model = build_interference(bundle);
        let delta = least_delta(bundle, 4).ok();
        let mut programs = Vec::new();
        for (id, spec) in specs.iter().enumerate() {
            let op = bundle
                .knowledge
                .op(&spec.ir.op)
                .ok_or_else(|| OracleError::MissingOp(spec.ir.op.clone()))?;
            let block = op
                .blocks
                .iter()
                .find(|b| b.name == spec.ir.block)
                .ok_or_else(|| OracleError::MissingBlock {
                    op: spec.ir.op.clone(),
                    block: spec.ir.block.clone(),
                })?
                .clone();
            let validate_items = map_validate(&block, &spec.ir.validate)?;
            for sym in &spec.ir.locks {
                let known = block.pre_symbols().contains(sym)
                    || bundle.theory.sentinels.iter().any(|s| s == sym);
                if !known {
                    return Err(OracleError::UnknownLockSymbol(sym.clone()));
                }
            }
            // The unfalsifiable set belongs to the operation, not to this
            // run: recompute it the way synthesis did, on the least
            // instance, with the block's own binding there.
            let unfalsify = delta
                .as_ref()
                .and_then(|d| {
                    d.choices
                        .get(&op.name)
                        .filter(|c| op.blocks[c.block_index].name == block.name)
                        .map(|c| {
                            let horizon = block.steps.len() + 2;
                            task1_unfalsify(&model, &op.name, &block, &d.state, &c.binding, horizon)
                                .unfalsify()
                        })
                })
                .unwrap_or_default();
            programs.push(ThreadProgram {
                id,
                op: op.name.clone(),
                block,
                validate_items,
                lock_syms: spec.ir.locks.clone(),
                steps: spec.ir.steps.clone(),
                unfalsify,
                key: spec.key,
            });
        }
        Ok(Harness { evaluator, programs, start: start.clone() })
    }

    /// Whether the thread can take its next micro-step in this world.
    pub fn runnable(&self, world: &World, id: usize) -> bool {
        let t = &world.threads[id];
        match t.phase {
            Phase::Done => false,
            Phase::Acquire(i) => {
                let node = t.lock_nodes[i];
                !world.locks.contains_key(&node)
            }
            _ => true,
        }
    }

    /// Apply thread `id`'s next micro-step. Returns the action rendered
    /// for traces. The caller guarantees `runnable`.
    pub fn micro_step(&self, world: &mut World, id: usize) -> String {
        let program = &self.programs[id];
        let phase = world.threads[id].phase.clone();
        match phase {
            Phase::Resolve => self.do_resolve(world, id),
            Phase::Acquire(i) => {
                let node = world.threads[id].lock_nodes[i];
                debug_assert!(!world.locks.contains_key(&node));
                world.locks.insert(node, id);
                world.threads[id].phase = if i + 1 < world.threads[id].lock_nodes.len() {
                    Phase::Acquire(i + 1)
                } else {
                    Phase::Validate
                };
                format!("lock({})", world.state.name(node))
            }
            Phase::Validate => self.do_validate(world, id),
            Phase::Step(i) => {
                let binding = world.threads[id].binding.clone().expect("validated");
                let step = &program.steps[i];
                world.state = apply_step(&world.state, step, &binding)
                    .expect("skeleton steps bind resolved symbols");
                world.threads[id].phase = if i + 1 < program.steps.len() {
                    Phase::Step(i + 1)
                } else if world.threads[id].lock_nodes.is_empty() {
                    self.finish(world, id, Completion::Completed);
                    Phase::Done
                } else {
                    Phase::Release(0)
                };
                format!("{step}")
            }
            Phase::Release(i) => {
                let held = world.threads[id].lock_nodes.len();
                let node = world.threads[id].lock_nodes[held - 1 - i];
                let owner = world.locks.remove(&node);
                debug_assert_eq!(owner, Some(id));
                world.threads[id].phase = if i + 1 < held {
                    Phase::Release(i + 1)
                } else {
                    self.finish(world, id, Completion::Completed);
                    Phase::Done
                };
                format!("unlock({})", world.state.name(node))
            }
            Phase::Abort(remaining) => {
                let node = world.threads[id].lock_nodes[remaining - 1];
                let owner = world.locks.remove(&node);
                debug_assert_eq!(owner, Some(id));
                world.threads[id].phase = if remaining > 1 {
                    Phase::Abort(remaining - 1)
                } else {
                    self.finish(world, id, Completion::Aborted);
                    Phase::Done
                };
                format!("unlock({}) [abort]", world.state.name(node))
            }
            Phase::Done => unreachable!("done threads are not runnable"),
        }
    }

    fn finish(&self, world: &mut World, id: usize, how: Completion) {
        world.threads[id].completion = how;
    }

    fn do_resolve(&self, world: &mut World, id: usize) -> String {
        let program = &self.programs[id];
        let resolved = resolve_binding(&self.evaluator, &world.state, &program.block, program.key);
        let Some(mut binding) = resolved else {
            world.threads[id].completion = Completion::NoWindow;
            world.threads[id].phase = Phase::Done;
            return "resolve: no window (no-op)".into();
        };
        // Prepare fresh nodes without locks: they are thread-local until a
        // link step publishes them.
        materialize_fresh(&program.block, &mut world.state, &mut binding, id);
        let lock_nodes: Vec<NodeId> = program
            .lock_syms
            .iter()
            .map(|sym| resolve_symbol(sym, &binding).expect("lock symbols checked at build"))
            .collect();
        let derived = self.evaluator.derive(&world.state);
        let unfalsify_ground: Vec<GroundAtom> = program
            .block
            .pre
            .iter()
            .filter_map(|item| match item {
                BodyItem::Pos(a) if program.unfalsify.contains(&a.to_string()) => {
                    ground_with_binding(a, &binding).ok()
                }
                _ => None,
            })
            .filter(|g| derived.contains(g))
            .collect();
        let rendered = binding.render(&world.state);
        let t = &mut world.threads[id];
        t.binding = Some(binding);
        t.lock_nodes = lock_nodes;
        t.unfalsify_ground = unfalsify_ground;
        t.phase = if t.lock_nodes.is_empty() { Phase::Validate } else { Phase::Acquire(0) };
        format!("resolve {}{rendered}", program.op)
    }

    fn do_validate(&self, world: &mut World, id: usize) -> String {
        let program = &self.programs[id];
        let binding = world.threads[id].binding.clone().expect("resolved");
        let derived = self.evaluator.derive(&world.state);
        let ok = program
            .validate_items
            .iter()
            .all(|item| holds(item, &derived, &binding).unwrap_or(false));
        if !ok {
            let held = world.threads[id].lock_nodes.len();
            world.threads[id].phase = if held == 0 {
                self.finish(world, id, Completion::Aborted);
                Phase::Done
            } else {
                Phase::Abort(held)
            };
            return "validate: failed (abort)".into();
        }
        // Snapshot the ground precondition fluents that hold now; Lemma 2
        // says no rival may falsify them before our last link step.
        let protected: Vec<(GroundAtom, bool)> = program
            .block
            .pre
            .iter()
            .filter_map(|item| {
                let (atom, want) = match item {
                    BodyItem::Pos(a) => (a, true),
                    BodyItem::Neg(a) => (a, false),
                    BodyItem::Cmp(_) => return None,
                };
                if !self.evaluator.theory().is_fluent(&atom.pred) {
                    return None;
                }
                ground_with_binding(atom, &binding).ok().map(|g| (g, want))
            })
            .collect();
        world.threads[id].protected = protected;
        world.threads[id].phase = if program.steps.is_empty() {
            if world.threads[id].lock_nodes.is_empty() {
                self.finish(world, id, Completion::Completed);
                Phase::Done
            } else {
                Phase::Release(0)
            }
        } else {
            Phase::Step(0)
        };
        "validate: ok".into()
    }
}

/// Allocate this thread's fresh nodes for the symbols its steps mention
/// and extend the binding, mirroring the ordering task's materialization.
/// Node names carry the thread id so rival allocations stay distinct.
fn materialize_fresh(block: &BlockSpec, state: &mut HeapState, binding: &mut Binding, id: usize) {
    let key_vars: BTreeMap<&str, &str> = block
        .pre_atoms()
        .filter(|a| a.pred == "key" && a.args.len() == 2)
        .filter_map(|a| match (&a.args[0], &a.args[1]) {
            (Term::Sym(s), Term::Var(v)) => Some((s.as_str(), v.as_str())),
            _ => None,
        })
        .collect();
    for sym in &block.fresh {
        let used = block.steps.iter().any(|st| st.a == *sym || st.b == *sym);
        if !used || binding.nodes.contains_key(sym) {
            continue;
        }
        let key = key_vars
            .get(sym.as_str())
            .and_then(|v| binding.keys.get(*v))
            .copied()
            .expect("fresh symbol used in steps must have a solved key");
        let node = state.add_node(format!("p{key}_t{id}"), key);
        binding.nodes.insert(sym.clone(), node);
    }
}

/// Bind a block's window against the live state the way real code would: a
/// pinned key follows the structure's search, so the window must lie on the
/// search's visit trail; without a pin any window will do.
pub(crate) fn resolve_binding(
    evaluator: &Evaluator,
    state: &HeapState,
    block: &BlockSpec,
    key: Option<i64>,
) -> Option<Binding> {
    match key {
        Some(k) => {
            let trail = search_trail(evaluator.theory(), state, k);
            match_pre_with_key(evaluator, state, block, k)
                .into_iter()
                .find(|b| reach_on_trail(block, b, &trail))
        }
        None => match_pre(evaluator, state, block).into_iter().next(),
    }
}

/// Every symbol the precondition requires reachable must be a node the key
/// search actually visits; shape alone can match windows a traversal would
/// never walk to.
fn reach_on_trail(block: &BlockSpec, binding: &Binding, trail: &[NodeId]) -> bool {
    block.pre.iter().all(|item| match item {
        BodyItem::Pos(a) if a.pred == "reach" && a.args.len() == 1 => match &a.args[0] {
            Term::Sym(s) => binding.nodes.get(s).map_or(true, |n| trail.contains(n)),
            _ => true,
        },
        _ => true,
    })
}

fn resolve_symbol(sym: &str, binding: &Binding) -> Option<NodeId> {
    if let Some(&n) = binding.nodes.get(sym) {
        return Some(n);
    }
    match sym {
        "h" => Some(NodeId::HEAD),
        "t" => Some(NodeId::TAIL),
        _ => None,
    }
}

/// Map the skeleton's validate strings back to precondition items. Fluent
/// literals match by display form; a comparison entry (possibly a merged
/// chain like `k_x < k_tau < k_y`) stands for every precondition
/// comparison, which the skeleton always carries in full.
fn map_validate(block: &BlockSpec, validate: &[String]) -> Result<Vec<BodyItem>, OracleError> {
    let mut items = Vec::new();
    let mut comparisons_added = false;
    for entry in validate {
        if entry.contains(" < ") || entry.contains(" = ") {
            if !comparisons_added {
                items.extend(block.pre.iter().filter(|i| matches!(i, BodyItem::Cmp(_))).cloned());
                comparisons_added = true;
            }
            continue;
        }
        let found = block
            .pre
            .iter()
            .find(|item| match item {
                BodyItem::Pos(a) => a.to_string() == *entry,
                BodyItem::Neg(a) => format!("not {a}") == *entry,
                BodyItem::Cmp(_) => false,
            })
            .cloned()
            .ok_or_else(|| OracleError::UnknownValidateLiteral(entry.clone()))?;
        items.push(found);
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codegen::{synthesize, SynthConfig};
    use crate::dsl::builtin_bundle;

    fn list_setup() -> (Bundle, HeapState, CodeIR, CodeIR) {
        let bundle = builtin_bundle("linked_list").unwrap();
        let report = synthesize(&bundle, &SynthConfig::default()).unwrap();
        let delta = report.delta.clone();
        let ins = report.op("ins").unwrap().outcome.code().unwrap().clone();
        let del = report.op("del").unwrap().outcome.code().unwrap().clone();
        (bundle, delta, ins, del)
    }

    #[test]
    fn single_insert_runs_to_completion() {
        let (bundle, delta, ins, _) = list_setup();
        let harness = Harness::new(
            &bundle,
            &delta,
            &[ThreadSpec { ir: ins, key: Some(15) }],
        )
        .unwrap();
        let mut world = World::start(&delta, 1);
        let mut log = Vec::new();
        while !world.all_done() {
            assert!(harness.runnable(&world, 0));
            log.push(harness.micro_step(&mut world, 0));
        }
        assert_eq!(world.threads[0].completion, Completion::Completed);
        // resolve, lock x, lock y, validate, two links, unlock y, unlock x
        assert_eq!(log.len(), 8);
        assert!(log[0].starts_with("resolve ins"));
        assert_eq!(log[1], "lock(n1)");
        assert_eq!(log[2], "lock(t)");
        assert_eq!(log[3], "validate: ok");
        assert_eq!(log[4], "link(tau,y)");
        assert_eq!(log[5], "link(x,tau)");
        assert_eq!(log[6], "unlock(t)");
        assert_eq!(log[7], "unlock(n1)");
        assert!(world.locks.is_empty());
        // The key is in: h -> n1 -> p15 -> t.
        let derived = harness.evaluator.derive(&world.state);
        assert!(derived.iter().any(|a| a.render(&world.state) == "present(15)"));
    }

    #[test]
    fn delete_first_makes_insert_abort() {
        let (bundle, delta, ins, del) = list_setup();
        let harness = Harness::new(
            &bundle,
            &delta,
            &[ThreadSpec { ir: ins, key: None }, ThreadSpec { ir: del, key: Some(10) }],
        )
        .unwrap();
        let mut world = World::start(&delta, 2);
        // Insert resolves its window (x:n1, y:t) first...
        harness.micro_step(&mut world, 0);
        // ...then delete runs to completion, unlinking n1.
        while world.threads[1].phase != Phase::Done {
            assert!(harness.runnable(&world, 1));
            harness.micro_step(&mut world, 1);
        }
        assert_eq!(world.threads[1].completion, Completion::Completed);
        // Insert's window node is now unreachable; validate must abort it
        // after it takes its locks.
        let mut log = Vec::new();
        while world.threads[0].phase != Phase::Done {
            assert!(harness.runnable(&world, 0));
            log.push(harness.micro_step(&mut world, 0));
        }
        assert_eq!(world.threads[0].completion, Completion::Aborted);
        assert!(log.iter().any(|l| l == "validate: failed (abort)"));
        assert!(world.locks.is_empty());
        // The heap shows only the delete: no key 505 was published.
        let derived = harness.evaluator.derive(&world.state);
        assert!(!derived.iter().any(|a| a.render(&world.state).starts_with("present(5")));
    }

    #[test]
    fn acquire_blocks_on_a_held_lock() {
        let (bundle, delta, ins, del) = list_setup();
        let harness = Harness::new(
            &bundle,
            &delta,
            &[ThreadSpec { ir: ins, key: None }, ThreadSpec { ir: del, key: Some(10) }],
        )
        .unwrap();
        let mut world = World::start(&delta, 2);
        // Both resolve; insert takes its first lock (n1).
        harness.micro_step(&mut world, 0);
        harness.micro_step(&mut world, 1);
        harness.micro_step(&mut world, 0);
        // Delete's first lock is h; it can take it. Its second is n1 — held.
        assert!(harness.runnable(&world, 1));
        harness.micro_step(&mut world, 1);
        assert!(!harness.runnable(&world, 1), "n1 is held by the insert");
        // Insert finishes and releases; delete unblocks.
        while world.threads[0].phase != Phase::Done {
            harness.micro_step(&mut world, 0);
        }
        assert!(harness.runnable(&world, 1));
    }

    #[test]
    fn pinned_absent_key_is_a_noop_delete() {
        let (bundle, delta, _, del) = list_setup();
        let harness =
            Harness::new(&bundle, &delta, &[ThreadSpec { ir: del, key: Some(77) }]).unwrap();
        let mut world = World::start(&delta, 1);
        let log = harness.micro_step(&mut world, 0);
        assert!(log.contains("no window"));
        assert_eq!(world.threads[0].completion, Completion::NoWindow);
        assert_eq!(world.state, delta);
    }

    #[test]
    fn unknown_validate_literal_is_rejected() {
        let (bundle, delta, mut ins, _) = list_setup();
        ins.validate.push("reach(q)".into());
        let err = Harness::new(&bundle, &delta, &[ThreadSpec { ir: ins, key: None }]);
        assert!(matches!(err, Err(OracleError::UnknownValidateLiteral(l)) if l == "reach(q)"));
    }
}
