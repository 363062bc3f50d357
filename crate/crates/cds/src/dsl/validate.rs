//! Static checks on parsed theories and knowledge bases: declarations and
//! arities, rule safety, stratification of negation, and the well-formedness
//! conditions on operation blocks (step symbols declared, steps bounded,
//! post restricted to fluents).

use std::collections::{BTreeMap, BTreeSet};

use super::ast::*;
use super::{DslError, StratificationResult};

/// Upper bound on link steps per block. Operations are windows touching a
/// constant-size fragment; anything larger is almost certainly an encoding
/// mistake.
pub const MAX_STEPS: usize = 8;

pub(super) fn validate_theory(theory: &Theory) -> Result<(), DslError> {
    if theory.root.is_empty() {
        return Err(DslError::MissingRoot);
    }
    if theory.sentinels != ["h".to_string(), "t".to_string()] {
        return Err(DslError::UnsupportedSentinels {
            found: theory.sentinels.join(" "),
        });
    }
    for (name, _) in theory.fluents.iter() {
        if theory.statics.contains_key(name) {
            return Err(DslError::DuplicateDeclaration { name: name.clone() });
        }
    }
    match theory.fluents.get(&theory.root) {
        Some(0) => {}
        Some(_) => {
            return Err(DslError::ArityMismatch {
                pred: theory.root.clone(),
                expected: 0,
                found: theory.arity(&theory.root).unwrap_or(usize::MAX),
            })
        }
        None => {
            return Err(DslError::UndeclaredPredicate {
                pred: theory.root.clone(),
                context: "structural root".into(),
            })
        }
    }

    for (idx, rule) in theory.rules.iter().enumerate() {
        let context = || format!("rule {}: {}", idx + 1, rule);
        for atom in rule
            .head
            .iter()
            .chain(rule.positive_body())
            .chain(rule.negative_body())
        {
            match theory.arity(&atom.pred) {
                None => {
                    return Err(DslError::UndeclaredPredicate {
                        pred: atom.pred.clone(),
                        context: context(),
                    })
                }
                Some(n) if n != atom.args.len() => {
                    return Err(DslError::ArityMismatch {
                        pred: atom.pred.clone(),
                        expected: n,
                        found: atom.args.len(),
                    })
                }
                Some(_) => {}
            }
        }
        for cmp in rule.comparisons() {
            if cmp.op == CmpOp::Eq {
                return Err(DslError::EqualityInTheory { rule: context() });
            }
        }
        // Safety: head, negated, and compared variables must be bound by the
        // positive body.
        let mut bound: BTreeSet<&str> = BTreeSet::new();
        for atom in rule.positive_body() {
            for t in &atom.args {
                if let Some(v) = t.var_name() {
                    bound.insert(v);
                }
            }
        }
        let mut needs: Vec<&str> = Vec::new();
        if let Some(h) = &rule.head {
            needs.extend(h.args.iter().filter_map(|t| t.var_name()));
        }
        for atom in rule.negative_body() {
            needs.extend(atom.args.iter().filter_map(|t| t.var_name()));
        }
        for cmp in rule.comparisons() {
            needs.extend([&cmp.lhs, &cmp.rhs].iter().filter_map(|t| t.var_name()));
        }
        if let Some(var) = needs.into_iter().find(|v| !bound.contains(v)) {
            return Err(DslError::UnsafeRule {
                rule: context(),
                var: var.to_string(),
            });
        }
    }

    match check_stratification(theory) {
        StratificationResult::Ok { .. } => Ok(()),
        StratificationResult::Cycle { witness } => Err(DslError::NotStratified {
            cycle: witness.join(" -> "),
        }),
    }
}

/// Decide whether any predicate depends on itself through negation. On
/// success the predicates are grouped into evaluation strata (every rule's
/// negated predicates live in strictly lower strata than its head).
pub fn check_stratification(theory: &Theory) -> StratificationResult {
    // Dependency edges head <- body-predicate, marked negative for `not`.
    let mut preds: BTreeSet<String> = BTreeSet::new();
    preds.extend(theory.fluents.keys().cloned());
    preds.extend(theory.statics.keys().cloned());
    let mut pos_deps: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut neg_deps: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for rule in &theory.rules {
        let Some(head) = &rule.head else { continue };
        for atom in rule.positive_body() {
            pos_deps
                .entry(head.pred.clone())
                .or_default()
                .insert(atom.pred.clone());
        }
        for atom in rule.negative_body() {
            neg_deps
                .entry(head.pred.clone())
                .or_default()
                .insert(atom.pred.clone());
        }
    }

    // Iterate stratum numbers to a fixpoint: positive deps push equal-or-
    // lower, negative deps strictly lower. Divergence past the predicate
    // count means a negative cycle.
    let mut stratum: BTreeMap<&str, usize> = preds.iter().map(|p| (p.as_str(), 0)).collect();
    let limit = preds.len() + 1;
    for _ in 0..=limit {
        let mut changed = false;
        for (head, deps) in &pos_deps {
            let need = deps
                .iter()
                .map(|d| stratum.get(d.as_str()).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            if stratum.get(head.as_str()).copied().unwrap_or(0) < need {
                stratum.insert(head.as_str(), need);
                changed = true;
            }
        }
        for (head, deps) in &neg_deps {
            let need = deps
                .iter()
                .map(|d| stratum.get(d.as_str()).copied().unwrap_or(0) + 1)
                .max()
                .unwrap_or(0);
            if stratum.get(head.as_str()).copied().unwrap_or(0) < need {
                stratum.insert(head.as_str(), need);
                changed = true;
            }
        }
        if !changed {
            let max = stratum.values().copied().max().unwrap_or(0);
            let mut strata = vec![Vec::new(); max + 1];
            for (p, s) in &stratum {
                strata[*s].push((*p).to_string());
            }
            return StratificationResult::Ok { strata };
        }
    }

    // Extract a concrete negative cycle for the witness: walk dependencies
    // from any predicate whose stratum kept growing.
    let witness = negative_cycle_witness(&pos_deps, &neg_deps)
        .unwrap_or_else(|| vec!["<unlocated>".into()]);
    StratificationResult::Cycle { witness }
}

fn negative_cycle_witness(
    pos: &BTreeMap<String, BTreeSet<String>>,
    neg: &BTreeMap<String, BTreeSet<String>>,
) -> Option<Vec<String>> {
    // DFS over the combined dependency graph looking for a cycle that uses
    // at least one negative edge.
    let mut starts: BTreeSet<&String> = neg.keys().collect();
    starts.extend(pos.keys());
    for start in starts {
        let mut path: Vec<(String, bool)> = vec![(start.clone(), false)];
        if let Some(cycle) = dfs_cycle(start, start, pos, neg, &mut path, 0) {
            return Some(cycle);
        }
    }
    None
}

fn dfs_cycle(
    current: &str,
    target: &str,
    pos: &BTreeMap<String, BTreeSet<String>>,
    neg: &BTreeMap<String, BTreeSet<String>>,
    path: &mut Vec<(String, bool)>,
    depth: usize,
) -> Option<Vec<String>> {
    if depth > 64 {
        return None;
    }
    let empty = BTreeSet::new();
    for (dep, negative) in neg
        .get(current)
        .unwrap_or(&empty)
        .iter()
        .map(|d| (d, true))
        .chain(pos.get(current).unwrap_or(&empty).iter().map(|d| (d, false)))
    {
        if dep == target {
            if negative || path.iter().any(|(_, n)| *n) {
                let mut cycle: Vec<String> = path.iter().map(|(p, _)| p.clone()).collect();
                cycle.push(if negative {
                    format!("not {target}")
                } else {
                    target.to_string()
                });
                return Some(cycle);
            }
            continue;
        }
        if path.iter().any(|(p, _)| p == dep) {
            continue;
        }
        path.push((dep.clone(), negative));
        if let Some(c) = dfs_cycle(dep, target, pos, neg, path, depth + 1) {
            return Some(c);
        }
        path.pop();
    }
    None
}

pub(super) fn validate_knowledge(kb: &KnowledgeBase, theory: &Theory) -> Result<(), DslError> {
    let prim = &kb.primitive;
    if prim.name != "link" || prim.read != "deref" {
        return Err(DslError::BadPrimitive {
            msg: format!(
                "expected primitives link/deref, found {}/{}",
                prim.name, prim.read
            ),
        });
    }
    if prim.modifies != 1 {
        return Err(DslError::BadPrimitive {
            msg: "link must modify its first argument".into(),
        });
    }
    match theory.fluents.get(&prim.causes) {
        Some(2) | Some(3) => {}
        _ => {
            return Err(DslError::BadPrimitive {
                msg: format!("caused fluent {} must be a binary or direction-labeled fluent", prim.causes),
            })
        }
    }
    if prim.read_uses != prim.causes {
        return Err(DslError::BadPrimitive {
            msg: format!(
                "deref reads {} but link writes {}",
                prim.read_uses, prim.causes
            ),
        });
    }
    let labeled = theory.arity(&prim.causes) == Some(3);

    for op in &kb.ops {
        let mut seen_blocks = BTreeSet::new();
        for block in &op.blocks {
            if !seen_blocks.insert(&block.name) {
                return Err(DslError::DuplicateDeclaration {
                    name: format!("{} {}", op.name, block.name),
                });
            }
            if block.steps.len() > MAX_STEPS {
                return Err(DslError::TooManySteps {
                    op: op.name.clone(),
                    block: block.name.clone(),
                    found: block.steps.len(),
                });
            }
            for item in &block.pre {
                let atom = match item {
                    BodyItem::Pos(a) | BodyItem::Neg(a) => a,
                    BodyItem::Cmp(_) => continue,
                };
                match theory.arity(&atom.pred) {
                    None => {
                        return Err(DslError::UndeclaredPredicate {
                            pred: atom.pred.clone(),
                            context: format!("pre of {} {}", op.name, block.name),
                        })
                    }
                    Some(n) if n != atom.args.len() => {
                        return Err(DslError::ArityMismatch {
                            pred: atom.pred.clone(),
                            expected: n,
                            found: atom.args.len(),
                        })
                    }
                    Some(_) => {}
                }
            }
            // Key variables in comparisons must come from key atoms of pre.
            let mut key_vars: BTreeSet<&str> = BTreeSet::new();
            for item in &block.pre {
                if let BodyItem::Pos(a) = item {
                    for t in &a.args {
                        if let Some(v) = t.var_name() {
                            key_vars.insert(v);
                        }
                    }
                }
            }
            for item in &block.pre {
                if let BodyItem::Cmp(c) = item {
                    for side in [&c.lhs, &c.rhs] {
                        if let Some(v) = side.var_name() {
                            if !key_vars.contains(v) {
                                return Err(DslError::UnsafeRule {
                                    rule: format!("pre of {} {}", op.name, block.name),
                                    var: v.to_string(),
                                });
                            }
                        }
                    }
                }
            }
            let mut allowed: BTreeSet<String> = block.pre_symbols().into_iter().collect();
            allowed.extend(block.fresh.iter().cloned());
            allowed.extend(theory.sentinels.iter().cloned());
            for step in &block.steps {
                for sym in [&step.a, &step.b] {
                    if !allowed.contains(sym) {
                        return Err(DslError::StepSymbol {
                            op: op.name.clone(),
                            block: block.name.clone(),
                            symbol: sym.clone(),
                        });
                    }
                }
                match (&step.dir, labeled) {
                    (None, false) => {}
                    (Some(d), true) if d == "left" || d == "right" => {}
                    _ => {
                        return Err(DslError::BadStepDirection {
                            op: op.name.clone(),
                            block: block.name.clone(),
                        })
                    }
                }
            }
            for lit in &block.post {
                let atom = match lit {
                    PostLit::Pos(a) | PostLit::Neg(a) => a,
                };
                match theory.fluents.get(&atom.pred) {
                    None => {
                        return Err(DslError::PostNotFluent {
                            op: op.name.clone(),
                            pred: atom.pred.clone(),
                        })
                    }
                    Some(n) if *n != atom.args.len() => {
                        return Err(DslError::ArityMismatch {
                            pred: atom.pred.clone(),
                            expected: *n,
                            found: atom.args.len(),
                        })
                    }
                    Some(_) => {}
                }
                for t in &atom.args {
                    if let Some(sym) = t.sym_name() {
                        let is_dir = labeled
                            && atom.pred == prim.causes
                            && atom.args.len() == 3
                            && std::ptr::eq(t, &atom.args[2]);
                        if !is_dir && !allowed.contains(sym) {
                            return Err(DslError::StepSymbol {
                                op: op.name.clone(),
                                block: block.name.clone(),
                                symbol: sym.to_string(),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{parse_knowledge, parse_theory};
    use super::*;

    const LIST: &str = "#fluent list/0 reach/1 suffix/1 present/1 edge/2.\n#static key/2.\n\
         #sentinel h t.\n#root list.\n\
         list :- edge(h, X), key(h, Kh), key(X, Kx), Kh < Kx, suffix(X).\n\
         suffix(t).\nsuffix(X) :- edge(X, Y), key(X, Kx), key(Y, Ky), Kx < Ky, suffix(Y).\n\
         reach(h).\nreach(X) :- edge(Y, X), reach(Y).\npresent(K) :- reach(X), key(X, K).";

    #[test]
    fn accepts_list_theory() {
        parse_theory(LIST).unwrap();
    }

    #[test]
    fn rejects_unsafe_rule() {
        let src = format!("{LIST}\nreach(Z) :- not suffix(Z).");
        match parse_theory(&src) {
            Err(DslError::UnsafeRule { var, .. }) => assert_eq!(var, "Z"),
            other => panic!("expected unsafe-rule error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_negative_cycle_with_witness() {
        let t = parse_theory("#fluent p/0 q/0 list/0.\n#static key/2.\n#sentinel h t.\n#root list.\nlist.\np :- not q.\nq :- not p.");
        match t {
            Err(DslError::NotStratified { cycle }) => {
                assert!(cycle.contains("not"), "cycle witness lacks a negative edge: {cycle}")
            }
            other => panic!("expected stratification error, got {other:?}"),
        }
    }

    #[test]
    fn self_negation_is_the_canonical_cycle() {
        let thin = "#fluent p/0 list/0.\n#static key/2.\n#sentinel h t.\n#root list.\nlist.\np :- not p.";
        match parse_theory(thin) {
            Err(DslError::NotStratified { cycle }) => assert!(cycle.starts_with('p')),
            other => panic!("expected stratification error, got {other:?}"),
        }
    }

    #[test]
    fn negation_free_theories_are_stratified() {
        let t = parse_theory(LIST).unwrap();
        match check_stratification(&t) {
            StratificationResult::Ok { strata } => {
                assert!(!strata.is_empty());
                let all: usize = strata.iter().map(Vec::len).sum();
                assert_eq!(all, t.fluents.len() + t.statics.len());
            }
            StratificationResult::Cycle { witness } => {
                panic!("negation-free theory reported cycle {witness:?}")
            }
        }
    }

    #[test]
    fn empty_input_misses_root() {
        assert!(matches!(parse_theory(""), Err(DslError::MissingRoot)));
    }

    #[test]
    fn rejects_undeclared_predicate() {
        let src = format!("{LIST}\nlist :- ghost(X), reach(X).");
        assert!(matches!(
            parse_theory(&src),
            Err(DslError::UndeclaredPredicate { .. })
        ));
    }

    #[test]
    fn rejects_equality_in_theory_rules() {
        let src = format!("{LIST}\nlist :- key(h, K1), key(t, K2), K1 = K2.");
        assert!(matches!(
            parse_theory(&src),
            Err(DslError::EqualityInTheory { .. })
        ));
    }

    #[test]
    fn rejects_step_on_undeclared_symbol() {
        let theory = parse_theory(LIST).unwrap();
        let kb = parse_knowledge(
            "#op ins block1 pre [reach(x)] post [] steps [link(w, x)].\n\
             #primitive link modifies 1 causes edge.\n#read deref uses edge.",
            &theory,
        );
        match kb {
            Err(DslError::StepSymbol { symbol, .. }) => assert_eq!(symbol, "w"),
            other => panic!("expected step-symbol error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_post_on_static() {
        let theory = parse_theory(LIST).unwrap();
        let kb = parse_knowledge(
            "#op ins block1 pre [reach(x)] post [key(x, Kx)] steps [].\n\
             #primitive link modifies 1 causes edge.\n#read deref uses edge.",
            &theory,
        );
        assert!(matches!(kb, Err(DslError::PostNotFluent { .. })));
    }
}
