//! The whole pipeline on a structure you wrote yourself: author the rules
//! and operations, synthesize, read the rejection when an operation's
//! contract is unsatisfiable, fix the contract, and finish with an
//! exhaustive concurrent check of the fixed code.
//!
//! The structure is a sorted chain (root invariant `sorted`). Version one
//! ships a flawed delete, `cut`, whose postcondition claims only the new
//! bypass edge and never licenses unreaching the victim node. No step
//! order can satisfy that contract, so synthesis refuses to lock it and
//! recommends the copy-based fallback. Version two states the contract
//! honestly and gets a lock-based skeleton.

use cds::codegen::{render_text, synthesize, OpOutcome, RcuCause, SynthConfig};
use cds::dsl::{parse_knowledge, parse_theory, Bundle};
use cds::instance::least_delta;
use cds::oracle::{explore, Harness, ThreadSpec};

const THEORY: &str = r#"
% A sorted chain between sentinels; `sorted` is the structure invariant.
#fluent sorted/0 suffix/1 reach/1 present/1 edge/2.
#static key/2.
#sentinel h t.
#root sorted.

sorted :- edge(h, X), key(h, Kh), key(X, Kx), Kh < Kx, suffix(X).
suffix(t).
suffix(X) :- edge(X, Y), key(X, Kx), key(Y, Ky), Kx < Ky, suffix(Y).
reach(h).
reach(X) :- edge(Y, X), reach(Y).
present(K) :- reach(X), key(X, K).
"#;

// `cut` routes x to z but its post never says `not reach(y)`: the contract
// insists y stays part of the footprint while the only step removes it.
const FLAWED_OPS: &str = r#"
#op member block1 fresh [] pre [] post [] steps [].

#op push block1 pre [reach(x), suffix(y), edge(x,y), key(x,Kx), key(y,Ky), key(tau,Kt), Kx < Kt, Kt < Ky] post [reach(tau), edge(x,tau), edge(tau,y)] steps [link(x,tau), link(tau,y)].

#op cut block1 pre [reach(x), edge(x,y), edge(y,z), suffix(z), key(y,Ky), key(tau,Kt), Kt = Ky] post [edge(x,z)] steps [link(x,z)].

#traverse member deref edge stop push.

#primitive link modifies 1 causes edge.
#read deref uses edge.
"#;

// `unlink` is `cut` with the honest postcondition.
const FIXED_OPS: &str = r#"
#op member block1 fresh [] pre [] post [] steps [].

#op push block1 pre [reach(x), suffix(y), edge(x,y), key(x,Kx), key(y,Ky), key(tau,Kt), Kx < Kt, Kt < Ky] post [reach(tau), edge(x,tau), edge(tau,y)] steps [link(x,tau), link(tau,y)].

#op unlink block1 pre [reach(x), suffix(z), edge(x,y), edge(y,z), key(y,Ky), key(tau,Kt), Kt = Ky] post [not reach(y), edge(x,z)] steps [link(x,z)].

#traverse member deref edge stop push.

#primitive link modifies 1 causes edge.
#read deref uses edge.
"#;

fn bundle(name: &str, ops: &str) -> Bundle {
    let theory = parse_theory(THEORY).expect("theory parses");
    let knowledge = parse_knowledge(ops, &theory).expect("knowledge parses");
    Bundle { name: name.into(), theory, knowledge }
}

fn main() {
    // -- version one: the flawed delete -----------------------------------
    let flawed = bundle("sorted_chain_v1", FLAWED_OPS);
    let report = synthesize(&flawed, &SynthConfig::default()).expect("synthesis runs");

    println!("version one ({}):", report.structure);
    for (op, outcome) in report.outcome_matrix() {
        println!("  {op:8} {outcome}");
    }

    let cut = report.op("cut").expect("cut report");
    let rcu = cut.outcome.rcu().expect("cut cannot be ordered");
    assert_eq!(rcu.cause, RcuCause::NoValidOrder);
    println!("\ncut falls back ({}): {}", rcu.cause.as_str(), rcu.summary);

    // The ordering task's evidence: every order of cut's steps (there is
    // exactly one, the single link) breaks the contract.
    let order = &cut.tasks.as_ref().expect("task reports").order;
    assert!(order.valid.is_empty());
    for rej in &order.rejected {
        println!(
            "  order {:?} fails after step {}: violates `{}`; state was",
            rej.order, rej.failed_after, rej.violation
        );
        for fact in &rej.state {
            println!("    {fact}");
        }
    }

    // -- version two: the honest delete -----------------------------------
    let fixed = bundle("sorted_chain_v2", FIXED_OPS);
    let report = synthesize(&fixed, &SynthConfig::default()).expect("synthesis runs");

    println!("\nversion two ({}):", report.structure);
    for (op, outcome) in report.outcome_matrix() {
        println!("  {op:8} {outcome}");
    }
    assert!(matches!(report.op("member").unwrap().outcome, OpOutcome::Unchanged(_)));

    let push_ir = report.op("push").unwrap().outcome.code().expect("push synthesizes").clone();
    let unlink_ir =
        report.op("unlink").unwrap().outcome.code().expect("unlink synthesizes").clone();
    println!("\n{}", render_text(&unlink_ir));

    // -- concurrent check of the fixed code -------------------------------
    // Run push and unlink against each other on the least instance,
    // exhaustively over every schedule. Keys come from the instance
    // search's own window choices.
    let delta = least_delta(&fixed, 4).expect("least instance exists");
    let push_key = delta.choices["push"].binding.keys["Kt"];
    let unlink_key = delta.choices["unlink"].binding.keys["Kt"];

    let harness = Harness::new(
        &fixed,
        &delta.state,
        &[
            ThreadSpec { ir: push_ir, key: Some(push_key) },
            ThreadSpec { ir: unlink_ir, key: Some(unlink_key) },
        ],
    )
    .expect("programs load");
    let verdict = explore(&harness, 500_000).expect("exploration fits the budget");

    println!("push({push_key}) against unlink({unlink_key}) on the least instance:");
    println!("  invariant-ok:        {}", verdict.invariant_ok);
    println!("  mutual-exclusion-ok: {}", verdict.mutual_exclusion_ok);
    println!("  lemma1-ok:           {}", verdict.lemma1_ok);
    println!("  lemma2-ok:           {}", verdict.lemma2_ok);
    println!("  linearizable:        {}", verdict.linearizable);
    println!(
        "  ({} configurations, {} final states)",
        verdict.stats.configurations, verdict.stats.final_states
    );
    assert!(verdict.all_ok());
}
