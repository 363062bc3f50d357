//! Stratified least-model evaluation of a theory over one concrete heap
//! state, plus single-literal queries and link-step application.

use std::collections::{BTreeMap, BTreeSet};

use crate::dsl::{
    check_stratification, Atom, BodyItem, CmpOp, Rule, StratificationResult, Term, Theory,
};
use crate::heap::{Dir, HeapState, NodeId};
use crate::instance::Binding;

use super::EngineError;

/// A fully ground term: a heap node, an integer key, or a plain symbol
/// (direction labels are the only symbols that survive grounding).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum GroundTerm {
    Node(NodeId),
    Int(i64),
    Sym(String),
}

/// A ground atom of the least model, e.g. `reach(n1)` or `key(n1, 10)`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct GroundAtom {
    pub pred: String,
    pub args: Vec<GroundTerm>,
}

impl GroundAtom {
    pub fn prop(pred: &str) -> Self {
        GroundAtom { pred: pred.to_string(), args: vec![] }
    }

    /// Human-readable form using the state's node names, for witnesses and
    /// report text.
    pub fn render(&self, state: &HeapState) -> String {
        if self.args.is_empty() {
            return self.pred.clone();
        }
        let args: Vec<String> = self
            .args
            .iter()
            .map(|t| match t {
                GroundTerm::Node(n) => state.name(*n).to_string(),
                GroundTerm::Int(i) => i.to_string(),
                GroundTerm::Sym(s) => s.clone(),
            })
            .collect();
        format!("{}({})", self.pred, args.join(","))
    }
}

/// Evaluator for one theory: strata are computed once, then [`derive`] runs
/// the per-stratum naive fixpoint over any number of states.
///
/// [`derive`]: Evaluator::derive
pub struct Evaluator {
    theory: Theory,
    /// Rules grouped by the stratum of their head predicate, in evaluation
    /// order. Headless rules (integrity constraints) take no part in model
    /// computation.
    strata: Vec<Vec<Rule>>,
}

impl Evaluator {
    pub fn new(theory: &Theory) -> Self {
        let strata_names = match check_stratification(theory) {
            StratificationResult::Ok { strata } => strata,
            // parse_theory rejects unstratified input; a hand-built Theory
            // that cheats gets a single stratum and least-model semantics
            // only for its negation-free part.
            StratificationResult::Cycle { .. } => vec![theory
                .fluents
                .keys()
                .chain(theory.statics.keys())
                .cloned()
                .collect()],
        };
        let index: BTreeMap<&str, usize> = strata_names
            .iter()
            .enumerate()
            .flat_map(|(i, preds)| preds.iter().map(move |p| (p.as_str(), i)))
            .collect();
        let mut strata: Vec<Vec<Rule>> = vec![Vec::new(); strata_names.len().max(1)];
        for rule in &theory.rules {
            if let Some(head) = &rule.head {
                let s = index.get(head.pred.as_str()).copied().unwrap_or(0);
                strata[s].push(rule.clone());
            }
        }
        Evaluator { theory: theory.clone(), strata }
    }

    pub fn theory(&self) -> &Theory {
        &self.theory
    }

    /// The extensional facts a state contributes: `edge` at the theory's
    /// arity, `key` for every node, and `node` for interior nodes when the
    /// theory declares it.
    pub fn state_facts(&self, state: &HeapState) -> BTreeSet<GroundAtom> {
        let mut db = BTreeSet::new();
        let labeled = self.theory.edge_arity() == 3;
        for (a, d, b) in state.edges() {
            let mut args = vec![GroundTerm::Node(a), GroundTerm::Node(b)];
            if labeled {
                args.push(GroundTerm::Sym(d.to_string()));
            }
            db.insert(GroundAtom { pred: "edge".into(), args });
        }
        for n in state.nodes() {
            let k = state.key(n).expect("every allocated node has a key");
            db.insert(GroundAtom {
                pred: "key".into(),
                args: vec![GroundTerm::Node(n), GroundTerm::Int(k)],
            });
        }
        if self.theory.is_static("node") {
            for n in state.interior_nodes() {
                db.insert(GroundAtom { pred: "node".into(), args: vec![GroundTerm::Node(n)] });
            }
        }
        db
    }

    /// Least model of the theory over the state's facts. Deterministic and
    /// idempotent; returns extensional and derived atoms together.
    pub fn derive(&self, state: &HeapState) -> BTreeSet<GroundAtom> {
        let mut db = self.state_facts(state);
        for stratum in &self.strata {
            loop {
                let mut fresh: BTreeSet<GroundAtom> = BTreeSet::new();
                for rule in stratum {
                    derive_rule(rule, &db, &mut fresh);
                }
                let before = db.len();
                db.extend(fresh);
                if db.len() == before {
                    break;
                }
            }
        }
        db
    }
}

/// Enumerate all ground instantiations of `rule`'s body against `db` and
/// push the resulting heads.
fn derive_rule(rule: &Rule, db: &BTreeSet<GroundAtom>, out: &mut BTreeSet<GroundAtom>) {
    let positives: Vec<&Atom> = rule.positive_body().collect();
    let mut subst: BTreeMap<String, GroundTerm> = BTreeMap::new();
    join(rule, &positives, 0, db, &mut subst, out);
}

fn join(
    rule: &Rule,
    positives: &[&Atom],
    idx: usize,
    db: &BTreeSet<GroundAtom>,
    subst: &mut BTreeMap<String, GroundTerm>,
    out: &mut BTreeSet<GroundAtom>,
) {
    if idx == positives.len() {
        // Positive body satisfied; check negation-as-failure literals and
        // comparisons, then emit the head.
        for neg in rule.negative_body() {
            let ground = ground_atom(neg, subst)
                .expect("unsafe rule slipped past validation: unbound negative literal");
            if db.contains(&ground) {
                return;
            }
        }
        for cmp in rule.comparisons() {
            let lhs = ground_int(&cmp.lhs, subst);
            let rhs = ground_int(&cmp.rhs, subst);
            let (Some(l), Some(r)) = (lhs, rhs) else { return };
            let ok = match cmp.op {
                CmpOp::Lt => l < r,
                CmpOp::Eq => l == r,
            };
            if !ok {
                return;
            }
        }
        if let Some(head) = &rule.head {
            let ground = ground_atom(head, subst)
                .expect("unsafe rule slipped past validation: unbound head variable");
            if !db.contains(&ground) {
                out.insert(ground);
            }
        }
        return;
    }
    let atom = positives[idx];
    // Ground atoms order by predicate first, so the same-pred facts form a
    // contiguous range — no full scan per join level.
    let lo = GroundAtom { pred: atom.pred.clone(), args: Vec::new() };
    for fact in db.range(lo..).take_while(|f| f.pred == atom.pred) {
        if fact.args.len() != atom.args.len() {
            continue;
        }
        let mut added: Vec<String> = Vec::new();
        let mut ok = true;
        for (pat, val) in atom.args.iter().zip(&fact.args) {
            match pat {
                Term::Var(v) => match subst.get(v) {
                    Some(bound) if bound == val => {}
                    Some(_) => {
                        ok = false;
                        break;
                    }
                    None => {
                        subst.insert(v.clone(), val.clone());
                        added.push(v.clone());
                    }
                },
                other => {
                    if resolve_const(other) != *val {
                        ok = false;
                        break;
                    }
                }
            }
        }
        if ok {
            join(rule, positives, idx + 1, db, subst, out);
        }
        for v in added {
            subst.remove(&v);
        }
    }
}

/// Constants appearing in theory rules: the sentinels resolve to their
/// nodes, integers to themselves, anything else is a direction label.
fn resolve_const(term: &Term) -> GroundTerm {
    match term {
        Term::Sym(s) if s == "h" => GroundTerm::Node(NodeId::HEAD),
        Term::Sym(s) if s == "t" => GroundTerm::Node(NodeId::TAIL),
        Term::Sym(s) => GroundTerm::Sym(s.clone()),
        Term::Int(n) => GroundTerm::Int(*n),
        Term::Var(v) => unreachable!("resolve_const on variable {v}"),
    }
}

fn ground_atom(atom: &Atom, subst: &BTreeMap<String, GroundTerm>) -> Option<GroundAtom> {
    let mut args = Vec::with_capacity(atom.args.len());
    for t in &atom.args {
        match t {
            Term::Var(v) => args.push(subst.get(v)?.clone()),
            other => args.push(resolve_const(other)),
        }
    }
    Some(GroundAtom { pred: atom.pred.clone(), args })
}

fn ground_int(term: &Term, subst: &BTreeMap<String, GroundTerm>) -> Option<i64> {
    match term {
        Term::Int(n) => Some(*n),
        Term::Var(v) => match subst.get(v)? {
            GroundTerm::Int(n) => Some(*n),
            _ => None,
        },
        Term::Sym(_) => None,
    }
}

/// Ground one precondition or postcondition atom under an operation
/// binding: node symbols resolve through the binding (sentinels directly),
/// key variables through the binding's key map, direction labels to
/// themselves.
pub fn ground_with_binding(
    atom: &Atom,
    binding: &Binding,
) -> Result<GroundAtom, EngineError> {
    let mut args = Vec::with_capacity(atom.args.len());
    for t in &atom.args {
        match t {
            Term::Sym(s) => {
                if let Some(&n) = binding.nodes.get(s) {
                    args.push(GroundTerm::Node(n));
                } else if s == "h" {
                    args.push(GroundTerm::Node(NodeId::HEAD));
                } else if s == "t" {
                    args.push(GroundTerm::Node(NodeId::TAIL));
                } else if s == "left" || s == "right" || s == "next" {
                    args.push(GroundTerm::Sym(s.clone()));
                } else {
                    return Err(EngineError::UnboundSymbol { symbol: s.clone() });
                }
            }
            Term::Var(v) => match binding.keys.get(v) {
                Some(&k) => args.push(GroundTerm::Int(k)),
                None => return Err(EngineError::UnboundSymbol { symbol: v.clone() }),
            },
            Term::Int(n) => args.push(GroundTerm::Int(*n)),
        }
    }
    Ok(GroundAtom { pred: atom.pred.clone(), args })
}

/// Evaluate one ground-able literal of a block precondition under a binding
/// against a derived model.
pub fn holds(
    item: &BodyItem,
    derived: &BTreeSet<GroundAtom>,
    binding: &Binding,
) -> Result<bool, EngineError> {
    match item {
        BodyItem::Pos(a) => Ok(derived.contains(&ground_with_binding(a, binding)?)),
        BodyItem::Neg(a) => Ok(!derived.contains(&ground_with_binding(a, binding)?)),
        BodyItem::Cmp(c) => {
            let val = |t: &Term| -> Result<i64, EngineError> {
                match t {
                    Term::Int(n) => Ok(*n),
                    Term::Var(v) => binding
                        .keys
                        .get(v)
                        .copied()
                        .ok_or_else(|| EngineError::UnboundSymbol { symbol: v.clone() }),
                    Term::Sym(s) => Err(EngineError::UnboundSymbol { symbol: s.clone() }),
                }
            };
            let (l, r) = (val(&c.lhs)?, val(&c.rhs)?);
            Ok(match c.op {
                CmpOp::Lt => l < r,
                CmpOp::Eq => l == r,
            })
        }
    }
}

/// Apply one link step under a binding: the bound source node's edge in the
/// step's direction is replaced with an edge to the bound target. Keys and
/// all other edges persist; the clock advances by one.
pub fn apply_step(
    state: &HeapState,
    step: &crate::dsl::Step,
    binding: &Binding,
) -> Result<HeapState, EngineError> {
    let resolve = |sym: &str| -> Result<NodeId, EngineError> {
        if let Some(&n) = binding.nodes.get(sym) {
            return Ok(n);
        }
        match sym {
            "h" => Ok(NodeId::HEAD),
            "t" => Ok(NodeId::TAIL),
            _ => Err(EngineError::UnboundSymbol { symbol: sym.to_string() }),
        }
    };
    let a = resolve(&step.a)?;
    if a == NodeId::TAIL {
        return Err(EngineError::TailModified);
    }
    let b = resolve(&step.b)?;
    let dir = match step.dir.as_deref() {
        None => Dir::Next,
        Some("left") => Dir::Left,
        Some("right") => Dir::Right,
        Some(other) => return Err(EngineError::UnboundSymbol { symbol: other.to_string() }),
    };
    let mut next = state.clone();
    next.set_succ(a, dir, b);
    next.clock = state.clock + 1;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::builtin_bundle;

    fn list_delta() -> HeapState {
        let mut s = HeapState::new();
        let n1 = s.add_node("n1", 10);
        s.set_succ(NodeId::HEAD, Dir::Next, n1);
        s.set_succ(n1, Dir::Next, NodeId::TAIL);
        s
    }

    #[test]
    fn derives_list_model() {
        let b = builtin_bundle("linked_list").unwrap();
        let ev = Evaluator::new(&b.theory);
        let s = list_delta();
        let m = ev.derive(&s);
        let n1 = s.node_by_name("n1").unwrap();
        for atom in [
            GroundAtom::prop("list"),
            GroundAtom { pred: "reach".into(), args: vec![GroundTerm::Node(NodeId::HEAD)] },
            GroundAtom { pred: "reach".into(), args: vec![GroundTerm::Node(n1)] },
            GroundAtom { pred: "reach".into(), args: vec![GroundTerm::Node(NodeId::TAIL)] },
            GroundAtom { pred: "suffix".into(), args: vec![GroundTerm::Node(n1)] },
            GroundAtom { pred: "suffix".into(), args: vec![GroundTerm::Node(NodeId::TAIL)] },
            GroundAtom { pred: "present".into(), args: vec![GroundTerm::Int(10)] },
        ] {
            assert!(m.contains(&atom), "missing {atom:?}");
        }
    }

    #[test]
    fn unreachable_node_keeps_suffix_loses_reach() {
        let b = builtin_bundle("linked_list").unwrap();
        let ev = Evaluator::new(&b.theory);
        let mut s = list_delta();
        // Unlink n1: h goes straight to t.
        s.set_succ(NodeId::HEAD, Dir::Next, NodeId::TAIL);
        let n1 = s.node_by_name("n1").unwrap();
        let m = ev.derive(&s);
        assert!(!m.contains(&GroundAtom {
            pred: "reach".into(),
            args: vec![GroundTerm::Node(n1)]
        }));
        assert!(m.contains(&GroundAtom {
            pred: "suffix".into(),
            args: vec![GroundTerm::Node(n1)]
        }));
        assert!(m.contains(&GroundAtom::prop("list")));
        assert!(!m.contains(&GroundAtom {
            pred: "present".into(),
            args: vec![GroundTerm::Int(10)]
        }));
    }

    #[test]
    fn broken_chain_loses_list() {
        let b = builtin_bundle("linked_list").unwrap();
        let ev = Evaluator::new(&b.theory);
        let mut s = list_delta();
        let p = s.add_node("p15", 15);
        let n1 = s.node_by_name("n1").unwrap();
        // n1 now points at p, and p points nowhere: the chain no longer
        // ends at the tail sentinel.
        s.set_succ(n1, Dir::Next, p);
        let m = ev.derive(&s);
        assert!(!m.contains(&GroundAtom::prop("list")));
        assert!(!m.contains(&GroundAtom {
            pred: "reach".into(),
            args: vec![GroundTerm::Node(NodeId::TAIL)]
        }));
    }

    #[test]
    fn derive_is_idempotent_and_deterministic() {
        let b = builtin_bundle("linked_list").unwrap();
        let ev = Evaluator::new(&b.theory);
        let s = list_delta();
        assert_eq!(ev.derive(&s), ev.derive(&s));
    }

    #[test]
    fn apply_step_replaces_single_edge() {
        let s = list_delta();
        let mut binding = Binding::default();
        binding.nodes.insert("x".into(), NodeId::HEAD);
        binding.nodes.insert("z".into(), NodeId::TAIL);
        let step = crate::dsl::Step { a: "x".into(), b: "z".into(), dir: None };
        let next = apply_step(&s, &step, &binding).unwrap();
        assert_eq!(next.succ(NodeId::HEAD, Dir::Next), Some(NodeId::TAIL));
        assert_eq!(next.clock, s.clock + 1);
        // Frame: exactly one successor entry may differ, keys identical.
        assert_eq!(next.all_keys(), s.all_keys());
        let diff: Vec<_> = next
            .edges()
            .filter(|e| !s.edges().any(|o| o == *e))
            .collect();
        assert_eq!(diff.len(), 1);
    }

    #[test]
    fn apply_step_rejects_tail_source() {
        let s = list_delta();
        let mut binding = Binding::default();
        binding.nodes.insert("x".into(), NodeId::TAIL);
        let step = crate::dsl::Step { a: "x".into(), b: "h".into(), dir: None };
        assert!(matches!(
            apply_step(&s, &step, &binding),
            Err(EngineError::TailModified)
        ));
    }
}
