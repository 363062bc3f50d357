//! The structure-description language: parsing, validation, rendering, and
//! the built-in theory/knowledge bundles.
//!
//! A bundle pairs a *theory* (stratified rules deriving well-formedness,
//! reachability, and presence from ground heap facts) with a *knowledge
//! base* (operation blocks over that theory). [`parse_theory`] and
//! [`parse_knowledge`] run the full validation pipeline; the raw parsers are
//! internal. [`builtin_bundle`] loads one of the three shipped structures by
//! name.

mod ast;
mod parse;
mod render;
mod validate;

pub use ast::*;
pub use render::{render_knowledge, render_theory};
pub use validate::{check_stratification, MAX_STEPS};

use thiserror::Error;

/// Built-in bundle names accepted by [`builtin_bundle`] and `--builtin`.
pub const BUILTIN_NAMES: [&str; 3] = ["linked_list", "external_bst", "internal_bst"];

#[derive(Debug, Error)]
pub enum DslError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("theory declares no structural root (empty input?)")]
    MissingRoot,
    #[error("duplicate declaration of '{name}'")]
    DuplicateDeclaration { name: String },
    #[error("undeclared predicate '{pred}' in {context}")]
    UndeclaredPredicate { pred: String, context: String },
    #[error("'{pred}' declared with arity {expected} but used with {found} arguments")]
    ArityMismatch { pred: String, expected: usize, found: usize },
    #[error("unsafe rule ({rule}): variable '{var}' not bound by a positive body atom")]
    UnsafeRule { rule: String, var: String },
    #[error("equality comparison is only allowed in operation preconditions ({rule})")]
    EqualityInTheory { rule: String },
    #[error("rules are not stratified: negative cycle {cycle}")]
    NotStratified { cycle: String },
    #[error("expected sentinels 'h t', found '{found}'")]
    UnsupportedSentinels { found: String },
    #[error("bad primitive declaration: {msg}")]
    BadPrimitive { msg: String },
    #[error("{op} {block} has {found} steps (limit {})", validate::MAX_STEPS)]
    TooManySteps { op: String, block: String, found: usize },
    #[error("{op} {block} step mentions '{symbol}' which is not a precondition, fresh, or sentinel symbol")]
    StepSymbol { op: String, block: String, symbol: String },
    #[error("{op} {block} step direction does not match the theory's edge arity")]
    BadStepDirection { op: String, block: String },
    #[error("postcondition of {op} asserts '{pred}' which is not a fluent")]
    PostNotFluent { op: String, pred: String },
    #[error("traversal names unknown operation '{name}'")]
    UnknownOperation { name: String },
    #[error("unknown builtin bundle '{name}' (expected one of linked_list, external_bst, internal_bst)")]
    UnknownBundle { name: String },
}

/// Outcome of the negation-stratification check. `Ok` carries the strata in
/// evaluation order; `Cycle` carries one dependency cycle through at least
/// one negative edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StratificationResult {
    Ok { strata: Vec<Vec<String>> },
    Cycle { witness: Vec<String> },
}

/// Parse and validate a theory: declarations resolved, rules safe,
/// negation stratified.
pub fn parse_theory(src: &str) -> Result<Theory, DslError> {
    let theory = parse::parse_theory_raw(src)?;
    validate::validate_theory(&theory)?;
    Ok(theory)
}

/// Parse and validate a knowledge base against its theory: step symbols
/// declared, directions matching the edge arity, posts restricted to
/// fluents, primitives consistent.
pub fn parse_knowledge(src: &str, theory: &Theory) -> Result<KnowledgeBase, DslError> {
    let kb = parse::parse_knowledge_raw(src)?;
    validate::validate_knowledge(&kb, theory)?;
    Ok(kb)
}

/// Load one of the shipped structure bundles: `linked_list`,
/// `external_bst`, or `internal_bst`.
pub fn builtin_bundle(name: &str) -> Result<Bundle, DslError> {
    let (theory_src, knowledge_src) = match name {
        "linked_list" => (
            include_str!("bundles/linked_list.theory.dsl"),
            include_str!("bundles/linked_list.knowledge.dsl"),
        ),
        "external_bst" => (
            include_str!("bundles/external_bst.theory.dsl"),
            include_str!("bundles/external_bst.knowledge.dsl"),
        ),
        "internal_bst" => (
            include_str!("bundles/internal_bst.theory.dsl"),
            include_str!("bundles/internal_bst.knowledge.dsl"),
        ),
        other => return Err(DslError::UnknownBundle { name: other.to_string() }),
    };
    let theory = parse_theory(theory_src)?;
    let knowledge = parse_knowledge(knowledge_src, &theory)?;
    Ok(Bundle { name: name.to_string(), theory, knowledge })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_builtins_load() {
        for name in BUILTIN_NAMES {
            let b = builtin_bundle(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(b.name, name);
            assert!(b.knowledge.op("member").is_some());
            assert!(b.knowledge.op("ins").is_some());
            assert!(b.knowledge.op("del").is_some());
        }
    }

    #[test]
    fn unknown_builtin_is_an_error() {
        assert!(matches!(
            builtin_bundle("skip_list"),
            Err(DslError::UnknownBundle { .. })
        ));
    }

    #[test]
    fn linked_list_bundle_shape() {
        let b = builtin_bundle("linked_list").unwrap();
        let mut preds: Vec<&str> = b
            .theory
            .fluents
            .keys()
            .chain(b.theory.statics.keys())
            .map(String::as_str)
            .collect();
        preds.sort_unstable();
        assert_eq!(preds, ["edge", "key", "list", "present", "reach", "suffix"]);
        let counts: Vec<(String, usize)> = b
            .knowledge
            .ops
            .iter()
            .map(|o| (o.name.clone(), o.blocks.iter().map(|bl| bl.steps.len()).sum()))
            .collect();
        assert_eq!(
            counts,
            [("member".to_string(), 0), ("ins".to_string(), 2), ("del".to_string(), 1)]
        );
        assert_eq!(b.theory.root, "list");
        assert_eq!(b.theory.edge_arity(), 2);
    }

    #[test]
    fn tree_bundles_use_labeled_edges() {
        for name in ["external_bst", "internal_bst"] {
            let b = builtin_bundle(name).unwrap();
            assert_eq!(b.theory.edge_arity(), 3, "{name}");
            assert_eq!(b.theory.root, "tree", "{name}");
            for op in &b.knowledge.ops {
                for block in &op.blocks {
                    for step in &block.steps {
                        assert!(step.dir.is_some(), "{name} {} {}", op.name, block.name);
                    }
                }
            }
        }
    }
}
