//! Pretty-printers inverse to the parser: for any theory or knowledge base
//! `t`, `parse(render(t))` yields a value equal to `t`. Used by `cds delta`
//! output, error reporting, and the round-trip property tests.

use std::fmt::Write as _;

use super::ast::*;

pub fn render_theory(theory: &Theory) -> String {
    let mut out = String::new();
    for (kw, table) in [("fluent", &theory.fluents), ("static", &theory.statics)] {
        if table.is_empty() {
            continue;
        }
        let decls: Vec<String> = table.iter().map(|(n, a)| format!("{n}/{a}")).collect();
        let _ = writeln!(out, "#{kw} {}.", decls.join(" "));
    }
    if !theory.sentinels.is_empty() {
        let _ = writeln!(out, "#sentinel {}.", theory.sentinels.join(" "));
    }
    if !theory.root.is_empty() {
        let _ = writeln!(out, "#root {}.", theory.root);
    }
    for rule in &theory.rules {
        let _ = writeln!(out, "{rule}");
    }
    out
}

fn render_items<T: std::fmt::Display>(items: &[T]) -> String {
    let parts: Vec<String> = items.iter().map(|i| i.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

pub fn render_knowledge(kb: &KnowledgeBase) -> String {
    let mut out = String::new();
    for op in &kb.ops {
        for block in &op.blocks {
            let _ = writeln!(
                out,
                "#op {} {} fresh [{}] pre {} post {} steps {}.",
                op.name,
                block.name,
                block.fresh.join(", "),
                render_items(&block.pre),
                render_items(&block.post),
                render_items(&block.steps),
            );
        }
    }
    for op in &kb.ops {
        if let Some(t) = &op.traversal {
            let _ = writeln!(out, "#traverse {} deref {} stop {}.", t.op, t.deref, t.stop);
        }
    }
    let p = &kb.primitive;
    let _ = writeln!(out, "#primitive {} modifies {} causes {}.", p.name, p.modifies, p.causes);
    let _ = writeln!(out, "#read {} uses {}.", p.read, p.read_uses);
    out
}

#[cfg(test)]
mod tests {
    use super::super::{parse_knowledge, parse_theory};
    use super::*;

    #[test]
    fn theory_roundtrips() {
        let src = "#fluent list/0 reach/1 suffix/1 edge/2.\n#static key/2.\n\
             #sentinel h t.\n#root list.\n\
             list :- edge(h, X), key(h, Kh), key(X, Kx), Kh < Kx, suffix(X).\n\
             suffix(t).\nreach(h).\nreach(X) :- edge(Y, X), reach(Y).";
        let theory = parse_theory(src).unwrap();
        let again = parse_theory(&render_theory(&theory)).unwrap();
        assert_eq!(theory, again);
    }

    #[test]
    fn knowledge_roundtrips() {
        let t = parse_theory(
            "#fluent list/0 reach/1 suffix/1 edge/2.\n#static key/2.\n#sentinel h t.\n#root list.\n\
             suffix(t).\nreach(h).\nreach(X) :- edge(Y, X), reach(Y).",
        )
        .unwrap();
        let src = "#op member block1 fresh [] pre [] post [] steps [].\n\
             #op ins block1 pre [reach(x), suffix(y), edge(x,y), key(x,Kx), key(y,Ky), key(tau,Kt), Kx < Kt, Kt < Ky] \
             post [reach(tau), edge(x,tau), edge(tau,y)] steps [link(x,tau), link(tau,y)].\n\
             #traverse member deref edge stop ins.\n\
             #primitive link modifies 1 causes edge.\n#read deref uses edge.";
        let kb = parse_knowledge(src, &t).unwrap();
        let again = parse_knowledge(&render_knowledge(&kb), &t).unwrap();
        assert_eq!(kb, again);
    }
}
