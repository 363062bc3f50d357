//! Syntax trees for the structure-description language.
//!
//! A *theory* declares predicates and gives stratified rules that derive the
//! intensional fluents (reachability, well-formedness, presence) from ground
//! edge/key facts. A *knowledge base* describes the operations over such a
//! structure: per-operation basic blocks (precondition, postcondition, link
//! steps), the read/write primitives, and optional traversal declarations.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// A term: a variable (uppercase-initial), a symbol (lowercase-initial
/// constant — sentinel, direction label, or knowledge node symbol), or an
/// integer key literal.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum Term {
    Var(String),
    Sym(String),
    Int(i64),
}

impl Term {
    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn var_name(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn sym_name(&self) -> Option<&str> {
        match self {
            Term::Sym(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Sym(s) => f.write_str(s),
            Term::Int(n) => write!(f, "{n}"),
        }
    }
}

/// `pred(t1, …, tn)`; a propositional atom has no argument list.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct Atom {
    pub pred: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(pred: impl Into<String>, args: Vec<Term>) -> Self {
        Atom { pred: pred.into(), args }
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(|t| t.var_name())
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pred)?;
        if !self.args.is_empty() {
            write!(f, "(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{a}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Eq,
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmpOp::Lt => "<",
            CmpOp::Eq => "=",
        })
    }
}

/// A key comparison `K1 < K2` or `K1 = K2` (equality only appears in
/// knowledge preconditions, enforced by validation).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub lhs: Term,
    pub op: CmpOp,
    pub rhs: Term,
}

impl Comparison {
    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.lhs.var_name().into_iter().chain(self.rhs.var_name())
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op, self.rhs)
    }
}

/// One conjunct of a rule body or block precondition.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum BodyItem {
    Pos(Atom),
    Neg(Atom),
    Cmp(Comparison),
}

impl fmt::Display for BodyItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BodyItem::Pos(a) => write!(f, "{a}"),
            BodyItem::Neg(a) => write!(f, "not {a}"),
            BodyItem::Cmp(c) => write!(f, "{c}"),
        }
    }
}

/// `head :- body.` A fact has an empty body; a constraint has no head.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Rule {
    pub head: Option<Atom>,
    pub body: Vec<BodyItem>,
}

impl Rule {
    pub fn positive_body(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().filter_map(|b| match b {
            BodyItem::Pos(a) => Some(a),
            _ => None,
        })
    }

    pub fn negative_body(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().filter_map(|b| match b {
            BodyItem::Neg(a) => Some(a),
            _ => None,
        })
    }

    pub fn comparisons(&self) -> impl Iterator<Item = &Comparison> {
        self.body.iter().filter_map(|b| match b {
            BodyItem::Cmp(c) => Some(c),
            _ => None,
        })
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(h) = &self.head {
            write!(f, "{h}")?;
        }
        if !self.body.is_empty() {
            write!(f, " :- ")?;
            for (i, b) in self.body.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{b}")?;
            }
        }
        write!(f, ".")
    }
}

/// Declared predicates and rules of one data-structure theory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Theory {
    /// Time-dependent predicates (edge, reach, …) with arities.
    pub fluents: BTreeMap<String, usize>,
    /// Time-invariant predicates (key, node, …) with arities.
    pub statics: BTreeMap<String, usize>,
    /// Head and tail sentinel names, in declaration order.
    pub sentinels: Vec<String>,
    /// Nullary predicate whose truth means "the structure is well-formed".
    pub root: String,
    pub rules: Vec<Rule>,
}

impl Theory {
    pub fn arity(&self, pred: &str) -> Option<usize> {
        self.fluents.get(pred).or_else(|| self.statics.get(pred)).copied()
    }

    pub fn is_fluent(&self, pred: &str) -> bool {
        self.fluents.contains_key(pred)
    }

    pub fn is_static(&self, pred: &str) -> bool {
        self.statics.contains_key(pred)
    }

    /// The arity the theory declared for `edge`: 2 for chains, 3 for trees.
    pub fn edge_arity(&self) -> usize {
        self.arity("edge").unwrap_or(2)
    }
}

/// The single destructive primitive and the read primitive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrimitiveSpec {
    /// Destructive primitive name (`link`).
    pub name: String,
    /// 1-based argument position it modifies (the source node).
    pub modifies: usize,
    /// Fluent its application establishes (`edge`).
    pub causes: String,
    /// Read primitive name (`deref`) and the fluent one read consumes.
    pub read: String,
    pub read_uses: String,
}

impl Default for PrimitiveSpec {
    fn default() -> Self {
        PrimitiveSpec {
            name: "link".into(),
            modifies: 1,
            causes: "edge".into(),
            read: "deref".into(),
            read_uses: "edge".into(),
        }
    }
}

/// One `link(a, b[, dir])` step. Symbols refer to precondition node symbols,
/// fresh symbols, or sentinels; `dir` is required exactly when the theory
/// declares `edge/3`.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Step {
    pub a: String,
    pub b: String,
    pub dir: Option<String>,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.dir {
            Some(d) => write!(f, "link({},{},{})", self.a, self.b, d),
            None => write!(f, "link({},{})", self.a, self.b),
        }
    }
}

/// A postcondition literal, possibly negated (`not reach(y)`).
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum PostLit {
    Pos(Atom),
    Neg(Atom),
}

impl fmt::Display for PostLit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PostLit::Pos(a) => write!(f, "{a}"),
            PostLit::Neg(a) => write!(f, "not {a}"),
        }
    }
}

/// One basic block of an operation: applicability condition, effect
/// specification, and the ordered link steps of the sequential code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSpec {
    pub name: String,
    /// Fresh node symbols allocated by the block (defaults to `[tau]`).
    pub fresh: Vec<String>,
    pub pre: Vec<BodyItem>,
    pub post: Vec<PostLit>,
    pub steps: Vec<Step>,
}

impl BlockSpec {
    /// Positive precondition atoms, in declaration order.
    pub fn pre_atoms(&self) -> impl Iterator<Item = &Atom> {
        self.pre.iter().filter_map(|i| match i {
            BodyItem::Pos(a) => Some(a),
            _ => None,
        })
    }

    /// Negated precondition atoms, in declaration order.
    pub fn pre_neg_atoms(&self) -> impl Iterator<Item = &Atom> {
        self.pre.iter().filter_map(|i| match i {
            BodyItem::Neg(a) => Some(a),
            _ => None,
        })
    }

    /// Precondition comparisons, in declaration order.
    pub fn pre_cmps(&self) -> impl Iterator<Item = &Comparison> {
        self.pre.iter().filter_map(|i| match i {
            BodyItem::Cmp(c) => Some(c),
            _ => None,
        })
    }

    /// Node symbols bound by the precondition (symbols in atom arguments,
    /// excluding direction labels), in first-occurrence order.
    pub fn pre_symbols(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for item in &self.pre {
            let atom = match item {
                BodyItem::Pos(a) | BodyItem::Neg(a) => a,
                BodyItem::Cmp(_) => continue,
            };
            let node_args = if atom.pred == "edge" && atom.args.len() == 3 {
                &atom.args[..2] // third position is the direction label
            } else {
                &atom.args[..]
            };
            for t in node_args {
                if let Some(s) = t.sym_name() {
                    if !out.iter().any(|x| x == s) {
                        out.push(s.to_string());
                    }
                }
            }
        }
        out
    }
}

/// An operation: name plus one or more basic blocks. Pure observers carry a
/// traversal and no steps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OperationSpec {
    pub name: String,
    pub blocks: Vec<BlockSpec>,
    pub traversal: Option<TraversalSpec>,
}

impl OperationSpec {
    /// An operation is destructive when any block carries link steps.
    pub fn is_destructive(&self) -> bool {
        self.blocks.iter().any(|b| !b.steps.is_empty())
    }
}

/// Traversal declaration: visit nodes by dereferencing `deref` once per
/// recursive call, terminating when the `stop` operation's block precondition
/// holds at the cursor window (or when the target key is resolved).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraversalSpec {
    pub op: String,
    pub deref: String,
    pub stop: String,
}

/// All operations over one theory plus the primitive declarations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnowledgeBase {
    pub ops: Vec<OperationSpec>,
    pub primitive: PrimitiveSpec,
}

impl KnowledgeBase {
    pub fn op(&self, name: &str) -> Option<&OperationSpec> {
        self.ops.iter().find(|o| o.name == name)
    }

    pub fn destructive_ops(&self) -> impl Iterator<Item = &OperationSpec> {
        self.ops.iter().filter(|o| o.is_destructive())
    }
}

/// A named theory/knowledge pair, ready for synthesis.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub name: String,
    pub theory: Theory,
    pub knowledge: KnowledgeBase,
}
