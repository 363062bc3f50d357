//! Author a structure in the rule DSL and inspect what the parser makes of
//! it: the theory (fluents, rules, sentinels, the root invariant) and the
//! operation knowledge (blocks with preconditions, postconditions, and link
//! steps). Both halves render back to canonical text, so round-tripping is
//! easy to check.

use cds::dsl::{
    check_stratification, parse_knowledge, parse_theory, render_knowledge, render_theory,
    StratificationResult,
};

const THEORY: &str = r#"
% A sorted singly-linked chain between two sentinels.
#fluent list/0 suffix/1 reach/1 present/1 edge/2.
#static key/2.
#sentinel h t.
#root list.

list :- edge(h, X), key(h, Kh), key(X, Kx), Kh < Kx, suffix(X).
suffix(t).
suffix(X) :- edge(X, Y), key(X, Kx), key(Y, Ky), Kx < Ky, suffix(Y).
reach(h).
reach(X) :- edge(Y, X), reach(Y).
present(K) :- reach(X), key(X, K).
"#;

const KNOWLEDGE: &str = r#"
% `member` only traverses. `push` splices a fresh node tau into the gap
% between an adjacent pair whose keys bracket the new key.
#op member block1 fresh [] pre [] post [] steps [].

#op push block1 pre [reach(x), suffix(y), edge(x,y), key(x,Kx), key(y,Ky), key(tau,Kt), Kx < Kt, Kt < Ky] post [reach(tau), edge(x,tau), edge(tau,y)] steps [link(x,tau), link(tau,y)].

#traverse member deref edge stop push.

#primitive link modifies 1 causes edge.
#read deref uses edge.
"#;

fn main() {
    let theory = parse_theory(THEORY).expect("theory parses");
    println!("theory root: {}", theory.root);
    println!("sentinels:   {}", theory.sentinels.join(", "));
    println!("rules:       {}", theory.rules.len());
    match check_stratification(&theory) {
        StratificationResult::Ok { strata } => println!("strata:      {strata:?}"),
        StratificationResult::Cycle { witness } => {
            panic!("negation-free rules stratify trivially, yet: {witness:?}")
        }
    }

    let knowledge = parse_knowledge(KNOWLEDGE, &theory).expect("knowledge parses");
    for op in &knowledge.ops {
        for block in &op.blocks {
            println!(
                "op {} {}: {} pre conjunct(s), {} step(s), fresh [{}]",
                op.name,
                block.name,
                block.pre.len(),
                block.steps.len(),
                block.fresh.join(", "),
            );
        }
    }

    // Rendering is canonical: parsing the rendered text gives the same AST.
    let rendered_theory = render_theory(&theory);
    let rendered_knowledge = render_knowledge(&knowledge);
    let reparsed = parse_theory(&rendered_theory).expect("rendered theory reparses");
    assert_eq!(render_theory(&reparsed), rendered_theory);
    let reparsed_k =
        parse_knowledge(&rendered_knowledge, &theory).expect("rendered knowledge reparses");
    assert_eq!(render_knowledge(&reparsed_k), rendered_knowledge);
    println!("\ncanonical theory text:\n{rendered_theory}");
}
