//! Recursive-descent parser for the structure DSL.
//!
//! Statements are `.`-terminated and may span lines; `%` starts a comment
//! running to end of line. The lexer keeps line/column positions so syntax
//! errors point at the offending token.

use super::ast::*;
use super::DslError;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Hash,
    Ident(String),
    Int(i64),
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    Dot,
    If, // :-
    Lt,
    Eq,
    Slash,
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>, DslError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = src.chars().peekable();

    macro_rules! push {
        ($t:expr, $c:expr) => {
            out.push(Spanned { tok: $t, line, col: $c })
        };
    }

    while let Some(&c) = chars.peek() {
        let start_col = col;
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                chars.next();
                col += 1;
            }
            '%' => {
                while let Some(&c2) = chars.peek() {
                    if c2 == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '#' => {
                chars.next();
                col += 1;
                push!(Tok::Hash, start_col);
            }
            '(' => {
                chars.next();
                col += 1;
                push!(Tok::LParen, start_col);
            }
            ')' => {
                chars.next();
                col += 1;
                push!(Tok::RParen, start_col);
            }
            '[' => {
                chars.next();
                col += 1;
                push!(Tok::LBrack, start_col);
            }
            ']' => {
                chars.next();
                col += 1;
                push!(Tok::RBrack, start_col);
            }
            ',' => {
                chars.next();
                col += 1;
                push!(Tok::Comma, start_col);
            }
            '.' => {
                chars.next();
                col += 1;
                push!(Tok::Dot, start_col);
            }
            '/' => {
                chars.next();
                col += 1;
                push!(Tok::Slash, start_col);
            }
            '<' => {
                chars.next();
                col += 1;
                push!(Tok::Lt, start_col);
            }
            '=' => {
                chars.next();
                col += 1;
                push!(Tok::Eq, start_col);
            }
            ':' => {
                chars.next();
                col += 1;
                match chars.peek() {
                    Some('-') => {
                        chars.next();
                        col += 1;
                        push!(Tok::If, start_col);
                    }
                    _ => {
                        return Err(DslError::Syntax {
                            line,
                            col: start_col,
                            msg: "expected '-' after ':'".into(),
                        })
                    }
                }
            }
            c if c.is_ascii_digit() => {
                let mut n: i64 = 0;
                while let Some(&d) = chars.peek() {
                    if let Some(v) = d.to_digit(10) {
                        n = n * 10 + v as i64;
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                push!(Tok::Int(n), start_col);
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_alphanumeric() || d == '_' {
                        s.push(d);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                push!(Tok::Ident(s), start_col);
            }
            other => {
                return Err(DslError::Syntax {
                    line,
                    col: start_col,
                    msg: format!("unexpected character '{other}'"),
                })
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self, DslError> {
        Ok(Parser { toks: lex(src)?, pos: 0 })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|s| (s.line, s.col))
            .unwrap_or((0, 0))
    }

    fn err(&self, msg: impl Into<String>) -> DslError {
        let (line, col) = self.here();
        DslError::Syntax { line, col, msg: msg.into() }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), DslError> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, DslError> {
        match self.peek() {
            Some(Tok::Ident(_)) => match self.next() {
                Some(Tok::Ident(s)) => Ok(s),
                _ => unreachable!(),
            },
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn at_dot(&self) -> bool {
        matches!(self.peek(), Some(Tok::Dot))
    }

    fn eat_ident_eq(&mut self, kw: &str) -> bool {
        if let Some(Tok::Ident(s)) = self.peek() {
            if s == kw {
                self.pos += 1;
                return true;
            }
        }
        false
    }

    fn term(&mut self) -> Result<Term, DslError> {
        match self.next() {
            Some(Tok::Ident(s)) => {
                if s.chars().next().map(|c| c.is_uppercase()).unwrap_or(false) {
                    Ok(Term::Var(s))
                } else {
                    Ok(Term::Sym(s))
                }
            }
            Some(Tok::Int(n)) => Ok(Term::Int(n)),
            _ => Err(self.err("expected term")),
        }
    }

    fn atom_from(&mut self, pred: String) -> Result<Atom, DslError> {
        let mut args = Vec::new();
        if matches!(self.peek(), Some(Tok::LParen)) {
            self.next();
            loop {
                args.push(self.term()?);
                match self.next() {
                    Some(Tok::Comma) => continue,
                    Some(Tok::RParen) => break,
                    _ => return Err(self.err("expected ',' or ')' in argument list")),
                }
            }
        }
        Ok(Atom { pred, args })
    }

    /// One conjunct: `not atom`, an atom, or a comparison `t < t` / `t = t`.
    fn body_item(&mut self) -> Result<BodyItem, DslError> {
        if self.eat_ident_eq("not") {
            let p = self.ident("predicate after 'not'")?;
            return Ok(BodyItem::Neg(self.atom_from(p)?));
        }
        // Could be an atom or the left side of a comparison.
        let first = match self.peek() {
            Some(Tok::Int(_)) => self.term()?,
            Some(Tok::Ident(_)) => {
                let name = self.ident("identifier")?;
                if matches!(self.peek(), Some(Tok::LParen)) {
                    return Ok(BodyItem::Pos(self.atom_from(name)?));
                }
                if name.chars().next().map(|c| c.is_uppercase()).unwrap_or(false) {
                    Term::Var(name)
                } else {
                    // Propositional atom unless a comparison operator follows.
                    match self.peek() {
                        Some(Tok::Lt) | Some(Tok::Eq) => Term::Sym(name),
                        _ => return Ok(BodyItem::Pos(Atom { pred: name, args: vec![] })),
                    }
                }
            }
            _ => return Err(self.err("expected literal or comparison")),
        };
        let op = match self.next() {
            Some(Tok::Lt) => CmpOp::Lt,
            Some(Tok::Eq) => CmpOp::Eq,
            _ => return Err(self.err("expected '<' or '=' in comparison")),
        };
        let rhs = self.term()?;
        Ok(BodyItem::Cmp(Comparison { lhs: first, op, rhs }))
    }

    fn body_until_dot(&mut self) -> Result<Vec<BodyItem>, DslError> {
        let mut items = vec![self.body_item()?];
        loop {
            match self.peek() {
                Some(Tok::Comma) => {
                    self.next();
                    items.push(self.body_item()?);
                }
                Some(Tok::Dot) => break,
                _ => return Err(self.err("expected ',' or '.' after body literal")),
            }
        }
        Ok(items)
    }

    /// `[ item, item, … ]`, possibly empty.
    fn bracketed<T>(
        &mut self,
        mut one: impl FnMut(&mut Self) -> Result<T, DslError>,
    ) -> Result<Vec<T>, DslError> {
        self.expect(Tok::LBrack, "'['")?;
        let mut out = Vec::new();
        if matches!(self.peek(), Some(Tok::RBrack)) {
            self.next();
            return Ok(out);
        }
        loop {
            out.push(one(self)?);
            match self.next() {
                Some(Tok::Comma) => continue,
                Some(Tok::RBrack) => break,
                _ => return Err(self.err("expected ',' or ']'")),
            }
        }
        Ok(out)
    }
}

/// Parsed but not yet validated theory text.
pub(super) fn parse_theory_raw(src: &str) -> Result<Theory, DslError> {
    let mut p = Parser::new(src)?;
    let mut theory = Theory {
        fluents: Default::default(),
        statics: Default::default(),
        sentinels: Vec::new(),
        root: String::new(),
        rules: Vec::new(),
    };

    while p.peek().is_some() {
        if matches!(p.peek(), Some(Tok::Hash)) {
            p.next();
            let kw = p.ident("declaration keyword")?;
            match kw.as_str() {
                "fluent" | "static" => loop {
                    if p.at_dot() {
                        p.next();
                        break;
                    }
                    let name = p.ident("predicate name")?;
                    p.expect(Tok::Slash, "'/' and arity")?;
                    let arity = match p.next() {
                        Some(Tok::Int(n)) if n >= 0 => n as usize,
                        _ => return Err(p.err("expected arity")),
                    };
                    let table = if kw == "fluent" { &mut theory.fluents } else { &mut theory.statics };
                    if table.insert(name.clone(), arity).is_some() {
                        return Err(DslError::DuplicateDeclaration { name });
                    }
                },
                "sentinel" => loop {
                    if p.at_dot() {
                        p.next();
                        break;
                    }
                    theory.sentinels.push(p.ident("sentinel name")?);
                },
                "root" => {
                    theory.root = p.ident("root predicate")?;
                    p.expect(Tok::Dot, "'.'")?;
                }
                other => return Err(p.err(format!("unknown declaration '#{other}' in theory"))),
            }
            continue;
        }

        // Rule, fact, or constraint.
        if matches!(p.peek(), Some(Tok::If)) {
            p.next();
            let body = p.body_until_dot()?;
            p.expect(Tok::Dot, "'.'")?;
            theory.rules.push(Rule { head: None, body });
            continue;
        }
        let pred = p.ident("rule head")?;
        let head = p.atom_from(pred)?;
        match p.next() {
            Some(Tok::Dot) => theory.rules.push(Rule { head: Some(head), body: vec![] }),
            Some(Tok::If) => {
                let body = p.body_until_dot()?;
                p.expect(Tok::Dot, "'.'")?;
                theory.rules.push(Rule { head: Some(head), body });
            }
            _ => return Err(p.err("expected ':-' or '.' after rule head")),
        }
    }
    Ok(theory)
}

/// Parsed but not yet validated knowledge text.
pub(super) fn parse_knowledge_raw(src: &str) -> Result<KnowledgeBase, DslError> {
    let mut p = Parser::new(src)?;
    let mut ops: Vec<OperationSpec> = Vec::new();
    let mut primitive = PrimitiveSpec::default();
    let mut traversals: Vec<TraversalSpec> = Vec::new();

    while p.peek().is_some() {
        p.expect(Tok::Hash, "'#' directive")?;
        let kw = p.ident("directive keyword")?;
        match kw.as_str() {
            "op" => {
                let op_name = p.ident("operation name")?;
                let block_name = p.ident("block name")?;
                let mut fresh = vec!["tau".to_string()];
                if p.eat_ident_eq("fresh") {
                    fresh = p
                        .bracketed(|p| p.ident("fresh symbol"))?
                        .into_iter()
                        .collect();
                }
                if !p.eat_ident_eq("pre") {
                    return Err(p.err("expected 'pre'"));
                }
                let pre = p.bracketed(|p| p.body_item())?;
                if !p.eat_ident_eq("post") {
                    return Err(p.err("expected 'post'"));
                }
                let post = p.bracketed(|p| {
                    if p.eat_ident_eq("not") {
                        let name = p.ident("predicate after 'not'")?;
                        Ok(PostLit::Neg(p.atom_from(name)?))
                    } else {
                        let name = p.ident("predicate")?;
                        Ok(PostLit::Pos(p.atom_from(name)?))
                    }
                })?;
                if !p.eat_ident_eq("steps") {
                    return Err(p.err("expected 'steps'"));
                }
                let steps = p.bracketed(|p| {
                    let prim = p.ident("step primitive")?;
                    if prim != "link" {
                        return Err(p.err(format!("unknown step primitive '{prim}'")));
                    }
                    p.expect(Tok::LParen, "'('")?;
                    let a = p.ident("source node symbol")?;
                    p.expect(Tok::Comma, "','")?;
                    let b = p.ident("target node symbol")?;
                    let dir = if matches!(p.peek(), Some(Tok::Comma)) {
                        p.next();
                        Some(p.ident("direction label")?)
                    } else {
                        None
                    };
                    p.expect(Tok::RParen, "')'")?;
                    Ok(Step { a, b, dir })
                })?;
                p.expect(Tok::Dot, "'.'")?;
                let block = BlockSpec { name: block_name, fresh, pre, post, steps };
                match ops.iter_mut().find(|o| o.name == op_name) {
                    Some(op) => op.blocks.push(block),
                    None => ops.push(OperationSpec {
                        name: op_name,
                        blocks: vec![block],
                        traversal: None,
                    }),
                }
            }
            "traverse" => {
                let op = p.ident("operation name")?;
                if !p.eat_ident_eq("deref") {
                    return Err(p.err("expected 'deref'"));
                }
                let deref = p.ident("deref fluent")?;
                if !p.eat_ident_eq("stop") {
                    return Err(p.err("expected 'stop'"));
                }
                let stop = p.ident("stop operation")?;
                p.expect(Tok::Dot, "'.'")?;
                traversals.push(TraversalSpec { op, deref, stop });
            }
            "primitive" => {
                let name = p.ident("primitive name")?;
                if !p.eat_ident_eq("modifies") {
                    return Err(p.err("expected 'modifies'"));
                }
                let modifies = match p.next() {
                    Some(Tok::Int(n)) if n >= 1 => n as usize,
                    _ => return Err(p.err("expected 1-based argument position")),
                };
                if !p.eat_ident_eq("causes") {
                    return Err(p.err("expected 'causes'"));
                }
                let causes = p.ident("caused fluent")?;
                p.expect(Tok::Dot, "'.'")?;
                primitive.name = name;
                primitive.modifies = modifies;
                primitive.causes = causes;
            }
            "read" => {
                let name = p.ident("read primitive name")?;
                if !p.eat_ident_eq("uses") {
                    return Err(p.err("expected 'uses'"));
                }
                let uses = p.ident("used fluent")?;
                p.expect(Tok::Dot, "'.'")?;
                primitive.read = name;
                primitive.read_uses = uses;
            }
            other => return Err(p.err(format!("unknown directive '#{other}' in knowledge"))),
        }
    }

    for t in traversals {
        match ops.iter_mut().find(|o| o.name == t.op) {
            Some(op) => op.traversal = Some(t),
            None => return Err(DslError::UnknownOperation { name: t.op }),
        }
    }
    Ok(KnowledgeBase { ops, primitive })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_facts_rules_constraints() {
        let t = parse_theory_raw(
            "#fluent reach/1 edge/2.\n#static key/2.\n#sentinel h t.\n#root list.\n\
             reach(h).\nreach(X) :- edge(Y,X), reach(Y).\n:- reach(X), not reach(X).\nlist :- reach(h).",
        )
        .unwrap();
        assert_eq!(t.rules.len(), 4);
        assert!(t.rules[0].body.is_empty());
        assert!(t.rules[2].head.is_none());
        assert_eq!(t.sentinels, vec!["h", "t"]);
        assert_eq!(t.root, "list");
    }

    #[test]
    fn comparison_and_negation_mix() {
        let t = parse_theory_raw(
            "#fluent suffix/1 edge/2.\n#static key/2.\n#sentinel h t.\n#root s.\n\
             suffix(X) :- edge(X,Y), key(X,K1), key(Y,K2), K1 < K2, not gone(X), suffix(Y).\n#fluent gone/1 s/0.",
        )
        .unwrap();
        let r = &t.rules[0];
        assert_eq!(r.positive_body().count(), 4);
        assert_eq!(r.negative_body().count(), 1);
        assert_eq!(r.comparisons().count(), 1);
    }

    #[test]
    fn syntax_error_carries_position() {
        let e = parse_theory_raw("#fluent reach/1.\nreach(X) :- edge(Y,X),.").unwrap_err();
        match e {
            DslError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn parses_op_block_with_steps() {
        let kb = parse_knowledge_raw(
            "#op ins block1 pre [reach(x), suffix(y), edge(x,y), key(x,Kx), key(y,Ky), key(tau,Kt), Kx < Kt, Kt < Ky] \
             post [reach(tau), edge(x,tau), edge(tau,y)] steps [link(x,tau), link(tau,y)].\n\
             #op member block1 pre [] post [] steps [].\n\
             #traverse member deref edge stop ins.\n\
             #primitive link modifies 1 causes edge.\n\
             #read deref uses edge.",
        )
        .unwrap();
        assert_eq!(kb.ops.len(), 2);
        let ins = kb.op("ins").unwrap();
        assert_eq!(ins.blocks[0].steps.len(), 2);
        assert_eq!(ins.blocks[0].fresh, vec!["tau"]);
        assert!(kb.op("member").unwrap().traversal.is_some());
        assert_eq!(kb.primitive.modifies, 1);
    }
}
