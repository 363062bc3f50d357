//! Instance unfolding and precondition matching: enumerate the canonical
//! family of well-formed heaps for a structure, bind operation blocks
//! against a concrete state, and pick the least instance δ on which every
//! destructive operation applies.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::dsl::{Atom, BlockSpec, Bundle, CmpOp, Term, Theory};
use crate::engine::{Evaluator, GroundAtom, GroundTerm};
use crate::heap::{Dir, HeapState, NodeId, MAX_KEY, MIN_KEY};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InstanceError {
    #[error("no instance within depth {depth} admits operation `{op}`")]
    NoDelta { op: String, depth: usize },
}

/// A ground assignment for one block: operation symbols to nodes, key
/// variables (including solved fresh keys) to integers.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Binding {
    pub nodes: BTreeMap<String, NodeId>,
    pub keys: BTreeMap<String, i64>,
}

impl Binding {
    /// `{x:h, y:n1}` — symbols in alphabetical order, nodes by display name.
    pub fn render(&self, state: &HeapState) -> String {
        let parts: Vec<String> = self
            .nodes
            .iter()
            .map(|(sym, node)| format!("{sym}:{}", state.name(*node)))
            .collect();
        format!("{{{}}}", parts.join(", "))
    }

    /// Node ids in symbol order; the deterministic tie-break for choosing
    /// among multiple bindings of one block.
    fn node_tuple(&self) -> Vec<NodeId> {
        self.nodes.values().copied().collect()
    }
}

/// All bindings of `block`'s precondition against a derived model, in
/// deterministic order (lexicographic over symbol-sorted node tuples).
/// `target_key` pins the key of the block's first fresh symbol, which is
/// how `ins(k)` and `del(k)` calls select their window; without it fresh
/// keys are solved to gap midpoints.
pub fn match_pre_model(
    theory: &Theory,
    derived: &BTreeSet<GroundAtom>,
    block: &BlockSpec,
    target_key: Option<i64>,
) -> Vec<Binding> {
    let fresh: BTreeSet<&str> = block.fresh.iter().map(|s| s.as_str()).collect();

    // Precondition atoms naming a fresh symbol are definitional key atoms
    // (`key(tau, Kt)`), not joinable facts: they connect the fresh symbol
    // to its key variable.
    let mut join_atoms: Vec<&Atom> = Vec::new();
    let mut fresh_key_vars: Vec<(String, String)> = Vec::new(); // (fresh sym, key var)
    for atom in block.pre_atoms() {
        let mentions_fresh = atom
            .args
            .iter()
            .any(|t| matches!(t, Term::Sym(s) if fresh.contains(s.as_str())));
        if mentions_fresh {
            if atom.pred == "key" && atom.args.len() == 2 {
                if let (Term::Sym(s), Term::Var(v)) = (&atom.args[0], &atom.args[1]) {
                    fresh_key_vars.push((s.clone(), v.clone()));
                    continue;
                }
            }
            // A fresh symbol inside anything but a key atom can never match
            // the current state; the block is inapplicable.
            return Vec::new();
        }
        join_atoms.push(atom);
    }
    // Fresh symbols in declaration order drive the solving order; symbols
    // without a key atom (possible, but none of the shipped structures do
    // this) simply have no key to solve.
    let ordered_fresh: Vec<(String, String)> = block
        .fresh
        .iter()
        .filter_map(|f| {
            fresh_key_vars
                .iter()
                .find(|(s, _)| s == f)
                .map(|(s, v)| (s.clone(), v.clone()))
        })
        .collect();

    let mut results: Vec<Binding> = Vec::new();
    let mut nodes: BTreeMap<String, NodeId> = BTreeMap::new();
    let mut keys: BTreeMap<String, i64> = BTreeMap::new();
    join_pre(
        theory,
        derived,
        &join_atoms,
        0,
        &mut nodes,
        &mut keys,
        &mut |nodes, keys| {
            let mut binding = Binding { nodes: nodes.clone(), keys: keys.clone() };
            let negs_ok = block.pre_neg_atoms().all(|a| {
                match crate::engine::ground_with_binding(a, &binding) {
                    Ok(g) => !derived.contains(&g),
                    Err(_) => false,
                }
            });
            if negs_ok
                && solve_fresh_keys(block, &ordered_fresh, &mut binding, target_key)
                && comparisons_hold(block, &binding)
            {
                results.push(binding);
            }
        },
    );
    results.sort_by(|a, b| a.node_tuple().cmp(&b.node_tuple()).then(a.keys.cmp(&b.keys)));
    results.dedup();
    results
}

/// Convenience wrapper deriving the model itself.
pub fn match_pre(evaluator: &Evaluator, state: &HeapState, block: &BlockSpec) -> Vec<Binding> {
    let derived = evaluator.derive(state);
    match_pre_model(evaluator.theory(), &derived, block, None)
}

/// Bindings with the block's first fresh key pinned to `key`.
pub fn match_pre_with_key(
    evaluator: &Evaluator,
    state: &HeapState,
    block: &BlockSpec,
    key: i64,
) -> Vec<Binding> {
    let derived = evaluator.derive(state);
    match_pre_model(evaluator.theory(), &derived, block, Some(key))
}

fn join_pre(
    theory: &Theory,
    derived: &BTreeSet<GroundAtom>,
    atoms: &[&Atom],
    idx: usize,
    nodes: &mut BTreeMap<String, NodeId>,
    keys: &mut BTreeMap<String, i64>,
    emit: &mut dyn FnMut(&BTreeMap<String, NodeId>, &BTreeMap<String, i64>),
) {
    if idx == atoms.len() {
        emit(nodes, keys);
        return;
    }
    let atom = atoms[idx];
    let labeled_edge = atom.pred == "edge" && theory.edge_arity() == 3;
    // Same-pred facts are contiguous in the ordered set; skip straight to
    // them instead of scanning the whole model.
    let lo = GroundAtom { pred: atom.pred.clone(), args: Vec::new() };
    'facts: for fact in derived.range(lo..).take_while(|f| f.pred == atom.pred) {
        if fact.args.len() != atom.args.len() {
            continue;
        }
        let mut new_nodes: Vec<String> = Vec::new();
        let mut new_keys: Vec<String> = Vec::new();
        for (pos, (pat, val)) in atom.args.iter().zip(&fact.args).enumerate() {
            let ok = match (pat, val) {
                // Third argument of a labeled edge atom is a direction
                // constant, never a node symbol.
                (Term::Sym(s), GroundTerm::Sym(label)) if labeled_edge && pos == 2 => s == label,
                (Term::Sym(s), GroundTerm::Node(n)) => match s.as_str() {
                    "h" => *n == NodeId::HEAD,
                    "t" => *n == NodeId::TAIL,
                    _ => match nodes.get(s) {
                        Some(bound) => bound == n,
                        None => {
                            nodes.insert(s.clone(), *n);
                            new_nodes.push(s.clone());
                            true
                        }
                    },
                },
                (Term::Var(v), GroundTerm::Int(k)) => match keys.get(v) {
                    Some(bound) => bound == k,
                    None => {
                        keys.insert(v.clone(), *k);
                        new_keys.push(v.clone());
                        true
                    }
                },
                (Term::Int(a), GroundTerm::Int(b)) => a == b,
                _ => false,
            };
            if !ok {
                for s in new_nodes.drain(..) {
                    nodes.remove(&s);
                }
                for v in new_keys.drain(..) {
                    keys.remove(&v);
                }
                continue 'facts;
            }
        }
        join_pre(theory, derived, atoms, idx + 1, nodes, keys, emit);
        for s in new_nodes {
            nodes.remove(&s);
        }
        for v in new_keys {
            keys.remove(&v);
        }
    }
}

/// Assign keys to fresh symbols. Order-constrained symbols take the
/// midpoint of the tightest interval their comparisons allow (computed
/// over the transitive closure of `<`), rejecting gaps narrower than 2;
/// equality-constrained symbols copy the other side; a pinned target key
/// overrides the first fresh symbol.
fn solve_fresh_keys(
    block: &BlockSpec,
    ordered_fresh: &[(String, String)],
    binding: &mut Binding,
    target_key: Option<i64>,
) -> bool {
    // Transitive closure of strict-order constraints over key terms.
    let mut lt: BTreeSet<(Term, Term)> = BTreeSet::new();
    for cmp in block.pre_cmps() {
        if cmp.op == CmpOp::Lt {
            lt.insert((cmp.lhs.clone(), cmp.rhs.clone()));
        }
    }
    loop {
        let mut grew = false;
        let pairs: Vec<_> = lt.iter().cloned().collect();
        for (a, b) in &pairs {
            for (c, d) in &pairs {
                if b == c && lt.insert((a.clone(), d.clone())) {
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }
    let value = |t: &Term, keys: &BTreeMap<String, i64>| -> Option<i64> {
        match t {
            Term::Int(n) => Some(*n),
            Term::Var(v) => keys.get(v).copied(),
            Term::Sym(_) => None,
        }
    };
    for (i, (_sym, var)) in ordered_fresh.iter().enumerate() {
        if binding.keys.contains_key(var) {
            continue;
        }
        if i == 0 {
            if let Some(k) = target_key {
                binding.keys.insert(var.clone(), k);
                continue;
            }
        }
        // An equality constraint determines the key outright (deletion
        // selects its victim this way).
        let eq = block.pre_cmps().find(|c| {
            c.op == CmpOp::Eq
                && (c.lhs == Term::Var(var.clone()) || c.rhs == Term::Var(var.clone()))
        });
        if let Some(c) = eq {
            let other = if c.lhs == Term::Var(var.clone()) { &c.rhs } else { &c.lhs };
            match value(other, &binding.keys) {
                Some(k) => {
                    binding.keys.insert(var.clone(), k);
                    continue;
                }
                None => return false,
            }
        }
        let me = Term::Var(var.clone());
        let mut lower = MIN_KEY;
        let mut upper = MAX_KEY;
        for (a, b) in &lt {
            if *b == me {
                if let Some(k) = value(a, &binding.keys) {
                    lower = lower.max(k);
                }
            }
            if *a == me {
                if let Some(k) = value(b, &binding.keys) {
                    upper = upper.min(k);
                }
            }
        }
        if upper - lower < 2 {
            return false;
        }
        binding.keys.insert(var.clone(), (lower + upper) / 2);
    }
    true
}

fn comparisons_hold(block: &BlockSpec, binding: &Binding) -> bool {
    block.pre_cmps().all(|c| {
        let val = |t: &Term| match t {
            Term::Int(n) => Some(*n),
            Term::Var(v) => binding.keys.get(v).copied(),
            Term::Sym(_) => None,
        };
        match (val(&c.lhs), val(&c.rhs)) {
            (Some(l), Some(r)) => match c.op {
                CmpOp::Lt => l < r,
                CmpOp::Eq => l == r,
            },
            _ => false,
        }
    })
}

/// The block chosen for an operation on δ, with its binding.
#[derive(Clone, Debug)]
pub struct OpChoice {
    pub block: String,
    pub block_index: usize,
    pub binding: Binding,
}

/// Result of the δ search: the least instance plus, for each destructive
/// operation, the least applicable block and binding.
#[derive(Clone, Debug)]
pub struct DeltaResult {
    pub state: HeapState,
    pub depth: usize,
    pub choices: BTreeMap<String, OpChoice>,
}

/// Least (block, binding) pair for one operation on a state, if any.
pub fn least_choice(
    evaluator: &Evaluator,
    derived: &BTreeSet<GroundAtom>,
    op: &crate::dsl::OperationSpec,
) -> Option<OpChoice> {
    for (i, block) in op.blocks.iter().enumerate() {
        let bindings = match_pre_model(evaluator.theory(), derived, block, None);
        if let Some(b) = bindings.into_iter().next() {
            return Some(OpChoice { block: block.name.clone(), block_index: i, binding: b });
        }
    }
    None
}

/// The canonical instance family of a theory, smallest first, one instance
/// per unfolding depth from 0 to `max_depth` inclusive.
///
/// Chains (unlabeled edges) grow by one interior node per depth. External
/// trees grow by one router along the left spine, keeping data in the
/// leaves. Internal trees grow through the fixed witness shapes that
/// successively license insertion and then successor-based deletion, after
/// which they extend along the right spine. Interior keys are multiples of
/// ten in symmetric order, so every instance leaves room for midpoint keys.
pub fn unfold_instances(theory: &Theory, max_depth: usize) -> Vec<HeapState> {
    (0..=max_depth)
        .map(|d| {
            if theory.edge_arity() == 2 {
                chain_instance(d)
            } else if theory.is_fluent("leaf") {
                external_instance(d)
            } else {
                internal_instance(d)
            }
        })
        .collect()
}

fn chain_instance(k: usize) -> HeapState {
    let mut s = HeapState::new();
    let mut prev = NodeId::HEAD;
    for i in 1..=k {
        let n = s.add_node(format!("n{i}"), 10 * i as i64);
        s.set_succ(prev, Dir::Next, n);
        prev = n;
    }
    s.set_succ(prev, Dir::Next, NodeId::TAIL);
    s
}

fn external_instance(k: usize) -> HeapState {
    let mut s = HeapState::new();
    if k == 0 {
        s.set_succ(NodeId::HEAD, Dir::Right, NodeId::TAIL);
        return s;
    }
    // k routers (keys 15, 25, …) over k+1 leaves (keys 10, 20, …), routers
    // stacked on the left spine. Allocation in ascending key order keeps
    // node names aligned with key order.
    let mut ids: BTreeMap<i64, NodeId> = BTreeMap::new();
    let mut all: Vec<i64> = (1..=k + 1).map(|i| 10 * i as i64).collect();
    all.extend((1..=k).map(|j| 10 * j as i64 + 5));
    all.sort_unstable();
    for (idx, key) in all.iter().enumerate() {
        ids.insert(*key, s.add_node(format!("n{}", idx + 1), *key));
    }
    for i in 1..=k + 1 {
        let leaf = ids[&(10 * i as i64)];
        s.set_succ(leaf, Dir::Left, NodeId::TAIL);
        s.set_succ(leaf, Dir::Right, NodeId::TAIL);
    }
    for j in 1..=k {
        let router = ids[&(10 * j as i64 + 5)];
        let left = if j == 1 { ids[&10] } else { ids[&(10 * (j - 1) as i64 + 5)] };
        s.set_succ(router, Dir::Left, left);
        s.set_succ(router, Dir::Right, ids[&(10 * (j + 1) as i64)]);
    }
    s.set_succ(NodeId::HEAD, Dir::Right, ids[&(10 * k as i64 + 5)]);
    s
}

fn internal_instance(k: usize) -> HeapState {
    let mut s = HeapState::new();
    // The head's left slot is permanent scratch space; shape rules only
    // look under h.right.
    s.set_succ(NodeId::HEAD, Dir::Left, NodeId::TAIL);
    if k == 0 {
        s.set_succ(NodeId::HEAD, Dir::Right, NodeId::TAIL);
        return s;
    }
    let n: Vec<NodeId> = (1..=k)
        .map(|i| s.add_node(format!("n{i}"), 10 * i as i64))
        .collect();
    let leaf = |s: &mut HeapState, x: NodeId| {
        s.set_succ(x, Dir::Left, NodeId::TAIL);
        s.set_succ(x, Dir::Right, NodeId::TAIL);
    };
    match k {
        1 => {
            s.set_succ(NodeId::HEAD, Dir::Right, n[0]);
            leaf(&mut s, n[0]);
        }
        2 => {
            s.set_succ(NodeId::HEAD, Dir::Right, n[1]);
            s.set_succ(n[1], Dir::Left, n[0]);
            s.set_succ(n[1], Dir::Right, NodeId::TAIL);
            leaf(&mut s, n[0]);
        }
        3 => {
            s.set_succ(NodeId::HEAD, Dir::Right, n[1]);
            s.set_succ(n[1], Dir::Left, n[0]);
            s.set_succ(n[1], Dir::Right, n[2]);
            leaf(&mut s, n[0]);
            leaf(&mut s, n[2]);
        }
        _ => {
            // Root with a left child and a right subtree whose own left
            // child is the root's in-order successor; extra nodes extend
            // the right spine.
            s.set_succ(NodeId::HEAD, Dir::Right, n[1]);
            s.set_succ(n[1], Dir::Left, n[0]);
            s.set_succ(n[1], Dir::Right, n[3]);
            s.set_succ(n[3], Dir::Left, n[2]);
            leaf(&mut s, n[0]);
            leaf(&mut s, n[2]);
            let mut spine = n[3];
            for x in n.iter().skip(4) {
                s.set_succ(spine, Dir::Right, *x);
                s.set_succ(*x, Dir::Left, NodeId::TAIL);
                spine = *x;
            }
            s.set_succ(spine, Dir::Right, NodeId::TAIL);
        }
    }
    s
}

/// Scan the instance family smallest-first for the first state on which
/// every destructive operation binds; that state is δ.
pub fn least_delta(bundle: &Bundle, max_depth: usize) -> Result<DeltaResult, InstanceError> {
    let evaluator = Evaluator::new(&bundle.theory);
    let mut last_missing: Option<String> = None;
    for (depth, state) in unfold_instances(&bundle.theory, max_depth).into_iter().enumerate() {
        let derived = evaluator.derive(&state);
        let mut choices = BTreeMap::new();
        let mut missing = None;
        for op in bundle.knowledge.destructive_ops() {
            match least_choice(&evaluator, &derived, op) {
                Some(c) => {
                    choices.insert(op.name.clone(), c);
                }
                None => {
                    missing = Some(op.name.clone());
                    break;
                }
            }
        }
        match missing {
            None => return Ok(DeltaResult { state, depth, choices }),
            Some(op) => last_missing = Some(op),
        }
    }
    Err(InstanceError::NoDelta {
        op: last_missing.unwrap_or_else(|| "(no destructive operations)".into()),
        depth: max_depth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::builtin_bundle;

    #[test]
    fn chain_family_shapes() {
        let b = builtin_bundle("linked_list").unwrap();
        let fam = unfold_instances(&b.theory, 3);
        assert_eq!(fam.len(), 4);
        assert_eq!(fam[0].interior_nodes().count(), 0);
        assert_eq!(fam[2].interior_nodes().count(), 2);
        let ev = Evaluator::new(&b.theory);
        for s in &fam {
            assert!(ev.derive(s).contains(&GroundAtom::prop("list")), "chain not a list");
        }
    }

    #[test]
    fn tree_families_satisfy_roots() {
        for name in ["external_bst", "internal_bst"] {
            let b = builtin_bundle(name).unwrap();
            let ev = Evaluator::new(&b.theory);
            for (d, s) in unfold_instances(&b.theory, 6).iter().enumerate() {
                assert!(
                    ev.derive(s).contains(&GroundAtom::prop("tree")),
                    "{name} depth {d} is not a well-formed tree"
                );
            }
        }
    }

    #[test]
    fn list_delta_is_single_node_chain() {
        let b = builtin_bundle("linked_list").unwrap();
        let d = least_delta(&b, 4).unwrap();
        assert_eq!(d.depth, 1);
        assert_eq!(d.state.interior_nodes().count(), 1);
        let ins = &d.choices["ins"];
        let n1 = d.state.node_by_name("n1").unwrap();
        assert_eq!(ins.binding.nodes["x"], n1);
        assert_eq!(ins.binding.nodes["y"], NodeId::TAIL);
        assert_eq!(ins.binding.keys["Kt"], 505);
        let del = &d.choices["del"];
        assert_eq!(del.binding.nodes["x"], NodeId::HEAD);
        assert_eq!(del.binding.nodes["y"], n1);
        assert_eq!(del.binding.keys["Kt"], 10);
    }

    #[test]
    fn list_insert_has_two_windows_least_first() {
        let b = builtin_bundle("linked_list").unwrap();
        let d = least_delta(&b, 4).unwrap();
        let ev = Evaluator::new(&b.theory);
        let ins = b.knowledge.op("ins").unwrap();
        let bindings = match_pre(&ev, &d.state, &ins.blocks[0]);
        assert_eq!(bindings.len(), 2);
        // h sorts after n1 by id, so the least binding is {x:n1, y:t}; the
        // head window {x:h, y:n1} comes second.
        let n1 = d.state.node_by_name("n1").unwrap();
        assert_eq!(bindings[0].nodes["x"], n1);
        assert_eq!(bindings[1].nodes["x"], NodeId::HEAD);
        assert_eq!(bindings[1].keys["Kt"], 5);
    }

    #[test]
    fn external_delta_binds_all_blocks_as_expected() {
        let b = builtin_bundle("external_bst").unwrap();
        let d = least_delta(&b, 4).unwrap();
        assert_eq!(d.depth, 1);
        let ins = &d.choices["ins"];
        assert_eq!(ins.block, "block1");
        let s = &d.state;
        assert_eq!(ins.binding.nodes["u"], s.node_by_name("n2").unwrap());
        assert_eq!(ins.binding.nodes["l"], s.node_by_name("n1").unwrap());
        assert_eq!(ins.binding.keys["Kt"], 5);
        assert_eq!(ins.binding.keys["Kr"], 7);
        let del = &d.choices["del"];
        assert_eq!(del.block, "block3");
        assert_eq!(del.binding.nodes["g"], NodeId::HEAD);
        assert_eq!(del.binding.nodes["l"], s.node_by_name("n1").unwrap());
        assert_eq!(del.binding.nodes["s"], s.node_by_name("n3").unwrap());
        assert_eq!(del.binding.keys["Kt"], 10);
    }

    #[test]
    fn internal_delta_needs_depth_four() {
        let b = builtin_bundle("internal_bst").unwrap();
        assert_eq!(
            least_delta(&b, 3).err(),
            Some(InstanceError::NoDelta { op: "del".into(), depth: 3 })
        );
        let d = least_delta(&b, 4).unwrap();
        assert_eq!(d.depth, 4);
        let s = &d.state;
        let del = &d.choices["del"];
        assert_eq!(del.binding.nodes["p"], NodeId::HEAD);
        assert_eq!(del.binding.nodes["y"], s.node_by_name("n2").unwrap());
        assert_eq!(del.binding.nodes["a"], s.node_by_name("n1").unwrap());
        assert_eq!(del.binding.nodes["r"], s.node_by_name("n4").unwrap());
        assert_eq!(del.binding.nodes["s"], s.node_by_name("n3").unwrap());
        assert_eq!(del.binding.keys["Kt"], 20);
        let ins = &d.choices["ins"];
        assert_eq!(ins.block, "block1");
        assert_eq!(ins.binding.nodes["u"], s.node_by_name("n1").unwrap());
        assert_eq!(ins.binding.keys["Kt"], 5);
    }

    #[test]
    fn target_key_selects_window_and_victim() {
        let b = builtin_bundle("linked_list").unwrap();
        let d = least_delta(&b, 4).unwrap();
        let ev = Evaluator::new(&b.theory);
        let ins = b.knowledge.op("ins").unwrap();
        let hits = match_pre_with_key(&ev, &d.state, &ins.blocks[0], 7);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].nodes["x"], NodeId::HEAD);
        assert_eq!(hits[0].keys["Kt"], 7);
        // Key 10 already present: no insert window admits it.
        assert!(match_pre_with_key(&ev, &d.state, &ins.blocks[0], 10).is_empty());
        let del = b.knowledge.op("del").unwrap();
        let hits = match_pre_with_key(&ev, &d.state, &del.blocks[0], 10);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].nodes["y"], d.state.node_by_name("n1").unwrap());
        assert!(match_pre_with_key(&ev, &d.state, &del.blocks[0], 7).is_empty());
    }
}
