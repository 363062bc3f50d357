//! From task verdicts to code. An operation earns a lock-based skeleton
//! only when all three gates pass, checked in a fixed order: some ordering
//! of its update steps preserves the invariant; its interference moves no
//! key out from under an in-flight traversal; and the heuristic lock set
//! protects every falsifiable precondition conjunct. A failed gate yields a
//! copy-based (RCU) recommendation carrying the deciding witness, and later
//! gates are never blamed. Pure observers pass through unchanged.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dsl::{BlockSpec, Bundle, CmpOp, OperationSpec, Step, Term};
use crate::engine::Evaluator;
use crate::heap::{HeapState, NodeId};
use crate::instance::{least_delta, InstanceError, OpChoice};
use crate::interference::{build_interference, GuardMode, InterferenceModel, LockSet};
use crate::tasks::{
    lock_order, task1_unfalsify, task2_adequacy, task3_program_order, task4_keymove,
    window_heuristic, AdequacyReport, FalsifyReport, KeyMoveReport, OrderReport,
};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Delta(#[from] InstanceError),
    #[error("lock heuristic names `{name}`, which is not a node of the instance")]
    UnknownNode { name: String },
}

/// Tunables for one synthesis run; `Default` gives the standard settings.
#[derive(Clone, Debug)]
pub struct SynthConfig {
    /// Interference horizon; `None` means two ticks beyond each block's
    /// step count. Zero disables interference entirely (degenerate).
    pub horizon: Option<usize>,
    pub guard: GuardMode,
    /// Lock-set override by window symbol or instance node name; `None`
    /// uses the window heuristic.
    pub heuristic: Option<Vec<String>>,
    /// Instance-search depth bound.
    pub depth: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { horizon: None, guard: GuardMode::Protocol, heuristic: None, depth: 4 }
    }
}

/// Neutral concurrent-code skeleton for one operation: acquire the window
/// locks in ascending key order, re-check the falsifiable precondition
/// conjuncts, run the update steps in a proven order, release in reverse.
/// Symbols refer to the operation's precondition window; the traversal that
/// binds them stays the sequential one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeIR {
    pub schema_version: u32,
    pub op: String,
    pub block: String,
    /// `success` for a synthesized skeleton, `unchanged` for an observer.
    pub outcome: String,
    /// Lock targets in acquisition order.
    pub locks: Vec<String>,
    /// Literals to validate after locking, in precondition order.
    pub validate: Vec<String>,
    /// Update steps in the chosen program order.
    pub steps: Vec<Step>,
    /// Reverse of `locks`.
    pub unlocks: Vec<String>,
    /// The unchanged traversal operation locating the window.
    pub traversal: Option<String>,
    /// Failed validation aborts: release everything, touch nothing.
    pub abort_on_validate_failure: bool,
}

/// Why locking was abandoned for an operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RcuCause {
    NoValidOrder,
    KeyMovement,
    InadequateLocks,
}

impl RcuCause {
    pub fn as_str(self) -> &'static str {
        match self {
            RcuCause::NoValidOrder => "no-valid-order",
            RcuCause::KeyMovement => "key-movement",
            RcuCause::InadequateLocks => "inadequate-locks",
        }
    }
}

/// Fallback recommendation: copy the window, edit privately, splice back
/// atomically. Carries the artifact of the gate that failed.
#[derive(Clone, Debug)]
pub struct RcuRecommendation {
    pub op: String,
    pub cause: RcuCause,
    pub summary: String,
    /// Self-describing witness; its `kind` field always matches the cause.
    pub witness: Value,
}

impl RcuRecommendation {
    fn no_valid_order(op: &str, order: &OrderReport) -> Self {
        let rejected: Vec<Value> = order.rejected.iter().map(rejection_json).collect();
        RcuRecommendation {
            op: op.to_string(),
            cause: RcuCause::NoValidOrder,
            summary: format!(
                "all {} step orders break the invariant mid-block; copy the window instead",
                order.rejected.len()
            ),
            witness: json!({ "kind": "rejected-orders", "rejected": rejected }),
        }
    }

    fn key_movement(op: &str, keymove: &KeyMoveReport) -> Self {
        let w = keymove.witness.as_ref().expect("key-movement cause requires a witness");
        RcuRecommendation {
            op: op.to_string(),
            cause: RcuCause::KeyMovement,
            summary: format!(
                "one `{}` moves key {} to {} while a traversal walks past it; \
                 locks cannot protect lock-free readers",
                w.op, w.key, w.node
            ),
            witness: json!({
                "kind": "key-movement",
                "op": w.op,
                "action": w.action,
                "fire_tick": w.fire_tick,
                "key": w.key,
                "node": w.node,
                "search_path": w.search_path,
            }),
        }
    }

    fn inadequate_locks(op: &str, adequacy: &AdequacyReport, delta: &HeapState) -> Self {
        let violated = adequacy.violated.clone().unwrap_or_default();
        let lock_names: Vec<String> =
            adequacy.locks.iter().map(|n| delta.name(*n).to_string()).collect();
        RcuRecommendation {
            op: op.to_string(),
            cause: RcuCause::InadequateLocks,
            summary: format!(
                "locks {{{}}} still admit interference falsifying {violated}",
                lock_names.join(", ")
            ),
            witness: json!({
                "kind": "inadequate-locks",
                "locks": lock_names,
                "guard": adequacy.guard.as_str(),
                "violated": violated,
                "trajectory": adequacy.witness.as_ref().map(|t| t.witness()),
            }),
        }
    }
}

/// Outcome for one operation, as in the result matrix.
#[derive(Clone, Debug)]
pub enum OpOutcome {
    /// Lock-based skeleton synthesized.
    Success(CodeIR),
    /// Copy-based fallback recommended.
    Rcu(RcuRecommendation),
    /// Pure observer; sequential code kept verbatim.
    Unchanged(CodeIR),
}

impl OpOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            OpOutcome::Success(_) => "Success",
            OpOutcome::Rcu(_) => "RCU",
            OpOutcome::Unchanged(_) => "Unchanged",
        }
    }

    pub fn code(&self) -> Option<&CodeIR> {
        match self {
            OpOutcome::Success(ir) | OpOutcome::Unchanged(ir) => Some(ir),
            OpOutcome::Rcu(_) => None,
        }
    }

    pub fn rcu(&self) -> Option<&RcuRecommendation> {
        match self {
            OpOutcome::Rcu(r) => Some(r),
            _ => None,
        }
    }
}

/// The four task reports behind one destructive operation's verdict.
#[derive(Debug)]
pub struct TaskBundle {
    pub block: String,
    pub binding_render: String,
    pub horizon: usize,
    pub falsify: FalsifyReport,
    pub adequacy: AdequacyReport,
    pub order: OrderReport,
    pub keymove: KeyMoveReport,
}

/// One operation's synthesis record: the verdict plus, for destructive
/// operations, every task report that fed it.
#[derive(Debug)]
pub struct OpSynthesis {
    pub op: String,
    pub outcome: OpOutcome,
    pub tasks: Option<TaskBundle>,
}

/// Whole-structure synthesis result.
#[derive(Debug)]
pub struct SynthesisReport {
    pub structure: String,
    pub delta: HeapState,
    pub depth: usize,
    pub guard: GuardMode,
    /// Set when a `--horizon` override was given.
    pub horizon_override: Option<usize>,
    /// Horizon zero admits no interference, so every unfalsifiability
    /// verdict is vacuous; the report says so.
    pub degenerate_horizon: bool,
    /// Operations in knowledge declaration order.
    pub ops: Vec<OpSynthesis>,
}

impl SynthesisReport {
    /// `op → Success | RCU | Unchanged`, the result matrix row.
    pub fn outcome_matrix(&self) -> BTreeMap<String, String> {
        self.ops
            .iter()
            .map(|o| (o.op.clone(), o.outcome.label().to_string()))
            .collect()
    }

    pub fn any_rcu(&self) -> bool {
        self.ops.iter().any(|o| matches!(o.outcome, OpOutcome::Rcu(_)))
    }

    pub fn op(&self, name: &str) -> Option<&OpSynthesis> {
        self.ops.iter().find(|o| o.op == name)
    }
}

/// The knowledge base's traversal operation name, if any is declared.
fn traversal_name(bundle: &Bundle) -> Option<String> {
    bundle
        .knowledge
        .ops
        .iter()
        .find_map(|o| o.traversal.as_ref().map(|t| t.op.clone()))
}

/// Key-variable display names: `key(x, Kx)` makes `Kx` render as `k_x`.
fn key_var_names(block: &BlockSpec) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for atom in block.pre_atoms() {
        if atom.pred == "key" && atom.args.len() == 2 {
            if let (Term::Sym(s), Term::Var(v)) = (&atom.args[0], &atom.args[1]) {
                map.insert(v.clone(), format!("k_{s}"));
            }
        }
    }
    map
}

fn render_operand(term: &Term, names: &BTreeMap<String, String>) -> String {
    match term {
        Term::Var(v) => names.get(v).cloned().unwrap_or_else(|| v.clone()),
        Term::Int(n) => n.to_string(),
        Term::Sym(s) => s.clone(),
    }
}

/// Precondition comparisons as display strings, with `<`-chains merged:
/// `Kx < Kt, Kt < Ky` becomes a single `k_x < k_tau < k_y`.
fn comparison_literals(block: &BlockSpec) -> Vec<String> {
    let names = key_var_names(block);
    let mut chains: Vec<(Vec<String>, CmpOp)> = Vec::new();
    for cmp in block.pre_cmps() {
        let lhs = render_operand(&cmp.lhs, &names);
        let rhs = render_operand(&cmp.rhs, &names);
        if cmp.op == CmpOp::Lt {
            if let Some((chain, CmpOp::Lt)) = chains.last_mut().map(|(c, o)| (c, *o)) {
                if chain.last() == Some(&lhs) {
                    chain.push(rhs);
                    continue;
                }
            }
        }
        chains.push((vec![lhs, rhs], cmp.op));
    }
    chains
        .into_iter()
        .map(|(chain, op)| chain.join(&format!(" {op} ")))
        .collect()
}

/// `pre(σ) ∖ Unfalsify` over the fluent conjuncts, in declaration order,
/// followed by the key comparisons: exactly what the skeleton re-checks
/// after locking.
fn validate_literals(falsify: &FalsifyReport, block: &BlockSpec) -> Vec<String> {
    let mut out: Vec<String> = falsify
        .verdicts
        .iter()
        .filter(|v| v.falsifiable)
        .map(|v| v.literal.clone())
        .collect();
    out.extend(comparison_literals(block));
    out
}

/// Lock node ids back to precondition symbols where the binding names
/// them, instance node names otherwise.
fn lock_symbols(
    ordered: &[NodeId],
    choice: &OpChoice,
    delta: &HeapState,
) -> Vec<String> {
    let mut by_node: BTreeMap<NodeId, String> = BTreeMap::new();
    for (sym, node) in &choice.binding.nodes {
        by_node.entry(*node).or_insert_with(|| sym.clone());
    }
    ordered
        .iter()
        .map(|n| by_node.get(n).cloned().unwrap_or_else(|| delta.name(*n).to_string()))
        .collect()
}

fn rejection_json(r: &crate::tasks::OrderVerdict) -> Value {
    json!({
        "order": r.order,
        "failed_after": r.failed_after,
        "violation": r.violation,
        "state": r.state,
    })
}

/// Resolve a `--heuristic` node-name list against the instance.
fn resolve_heuristic(
    names: &[String],
    delta: &HeapState,
    choice: &OpChoice,
) -> Result<LockSet, SynthError> {
    let mut locks = LockSet::new();
    for name in names {
        // Window symbols of the operation's own binding take precedence, so
        // one override like `x` names each operation's matching node; plain
        // instance node names and the sentinels work too.
        let node = choice.binding.nodes.get(name).copied().or_else(|| match name.as_str() {
            "h" => Some(NodeId::HEAD),
            "t" => Some(NodeId::TAIL),
            other => delta.node_by_name(other),
        });
        match node {
            Some(n) => {
                locks.insert(n);
            }
            None => return Err(SynthError::UnknownNode { name: name.clone() }),
        }
    }
    Ok(locks)
}

/// Run the three gates for one destructive operation and assemble either
/// the skeleton or the fallback. Gates are checked in the fixed order
/// step-ordering, key-movement, lock-adequacy; the first failure decides.
pub fn generate_concurrent_code(
    bundle: &Bundle,
    evaluator: &Evaluator,
    model: &InterferenceModel,
    op: &OperationSpec,
    choice: &OpChoice,
    delta: &HeapState,
    config: &SynthConfig,
) -> Result<OpSynthesis, SynthError> {
    let block = &op.blocks[choice.block_index];
    let horizon = config.horizon.unwrap_or(block.steps.len() + 2);

    let order = task3_program_order(evaluator, &op.name, block, delta, &choice.binding);
    // Key movement races this operation's own interference against the
    // shared traversal; other writers are judged on their own turn.
    let keymove = task4_keymove(&model.restrict(&op.name), delta, horizon);
    let falsify = task1_unfalsify(model, &op.name, block, delta, &choice.binding, horizon);
    let locks = match &config.heuristic {
        Some(names) => resolve_heuristic(names, delta, choice)?,
        None => window_heuristic(block, &choice.binding),
    };
    let adequacy = task2_adequacy(
        model,
        &op.name,
        block,
        delta,
        &choice.binding,
        &locks,
        config.guard,
        horizon,
    );

    let outcome = if order.valid.is_empty() {
        OpOutcome::Rcu(RcuRecommendation::no_valid_order(&op.name, &order))
    } else if keymove.keymove {
        OpOutcome::Rcu(RcuRecommendation::key_movement(&op.name, &keymove))
    } else if !adequacy.adequate {
        OpOutcome::Rcu(RcuRecommendation::inadequate_locks(&op.name, &adequacy, delta))
    } else {
        let ordered = lock_order(&locks, delta);
        let lock_syms = lock_symbols(&ordered, choice, delta);
        let chosen = &order.valid[0];
        let steps: Vec<Step> =
            chosen.iter().map(|&i| block.steps[i - 1].clone()).collect();
        let mut unlocks = lock_syms.clone();
        unlocks.reverse();
        OpOutcome::Success(CodeIR {
            schema_version: 1,
            op: op.name.clone(),
            block: block.name.clone(),
            outcome: "success".into(),
            locks: lock_syms,
            validate: validate_literals(&falsify, block),
            steps,
            unlocks,
            traversal: traversal_name(bundle),
            abort_on_validate_failure: true,
        })
    };

    Ok(OpSynthesis {
        op: op.name.clone(),
        outcome,
        tasks: Some(TaskBundle {
            block: block.name.clone(),
            binding_render: choice.binding.render(delta),
            horizon,
            falsify,
            adequacy,
            order,
            keymove,
        }),
    })
}

fn observer_synthesis(bundle: &Bundle, op: &OperationSpec) -> OpSynthesis {
    let block = op.blocks.first();
    OpSynthesis {
        op: op.name.clone(),
        outcome: OpOutcome::Unchanged(CodeIR {
            schema_version: 1,
            op: op.name.clone(),
            block: block.map(|b| b.name.clone()).unwrap_or_default(),
            outcome: "unchanged".into(),
            locks: Vec::new(),
            validate: Vec::new(),
            steps: Vec::new(),
            unlocks: Vec::new(),
            traversal: traversal_name(bundle),
            abort_on_validate_failure: true,
        }),
        tasks: None,
    }
}

/// Full pipeline for one structure: find the least instance, run the four
/// tasks per destructive operation, and decide each operation's outcome.
pub fn synthesize(bundle: &Bundle, config: &SynthConfig) -> Result<SynthesisReport, SynthError> {
    let delta = least_delta(bundle, config.depth)?;
    let evaluator = Evaluator::new(&bundle.theory);
    let model = build_interference(bundle);

    let mut ops = Vec::new();
    for op in &bundle.knowledge.ops {
        if !op.is_destructive() {
            ops.push(observer_synthesis(bundle, op));
            continue;
        }
        let choice = delta
            .choices
            .get(&op.name)
            .expect("least_delta guarantees a choice per destructive op");
        ops.push(generate_concurrent_code(
            bundle, &evaluator, &model, op, choice, &delta.state, config,
        )?);
    }

    Ok(SynthesisReport {
        structure: bundle.name.clone(),
        delta: delta.state,
        depth: delta.depth,
        guard: config.guard,
        horizon_override: config.horizon,
        degenerate_horizon: config.horizon == Some(0),
        ops,
    })
}

/// The concurrent fragment in canonical text: lock lines, one validate
/// conditional wrapping the update assignments, unlock lines. Observers
/// render as their unchanged traversal.
pub fn render_text(ir: &CodeIR) -> String {
    let mut out = format!("// {} ({})\n", ir.op, ir.block);
    if ir.steps.is_empty() {
        let traversal = ir.traversal.as_deref().unwrap_or(&ir.op);
        out.push_str(&format!("traverse({traversal})\n"));
        return out;
    }
    for lock in &ir.locks {
        out.push_str(&format!("lock({lock})\n"));
    }
    out.push_str(&format!("if validate({}) {{\n", ir.validate.join(", ")));
    for step in &ir.steps {
        let field = step.dir.as_deref().unwrap_or("next");
        out.push_str(&format!("  {}.{} := {};\n", step.a, field, step.b));
    }
    out.push_str("}\n");
    for lock in &ir.unlocks {
        out.push_str(&format!("unlock({lock})\n"));
    }
    out
}

fn witness_json(t: &Option<crate::engine::Trajectory>) -> Value {
    match t {
        Some(t) => t.witness(),
        None => Value::Null,
    }
}

fn tasks_json(tasks: &TaskBundle, delta: &HeapState) -> Value {
    let falsify = json!({
        "horizon": tasks.falsify.horizon,
        "verdicts": tasks.falsify.verdicts.iter().map(|v| json!({
            "literal": v.literal,
            "ground": v.ground,
            "falsifiable": v.falsifiable,
            "witness": witness_json(&v.witness),
        })).collect::<Vec<_>>(),
        "unfalsify": tasks.falsify.unfalsify(),
    });
    let adequacy = json!({
        "locks": tasks.adequacy.locks.iter().map(|n| delta.name(*n)).collect::<Vec<_>>(),
        "guard": tasks.adequacy.guard.as_str(),
        "horizon": tasks.adequacy.horizon,
        "adequate": tasks.adequacy.adequate,
        "violated": tasks.adequacy.violated,
        "witness": witness_json(&tasks.adequacy.witness),
    });
    let order = json!({
        "valid": tasks.order.valid,
        "declared_order_valid": tasks.order.declared_order_valid(),
        "rejected_count": tasks.order.rejected.len(),
        "first_rejected": tasks.order.rejected.first().map(rejection_json),
    });
    let keymove = json!({
        "horizon": tasks.keymove.horizon,
        "keymove": tasks.keymove.keymove,
        "checked_ops": tasks.keymove.checked_ops,
        "witness": tasks.keymove.witness.as_ref().map(|w| json!({
            "op": w.op,
            "action": w.action,
            "fire_tick": w.fire_tick,
            "key": w.key,
            "node": w.node,
            "search_path": w.search_path,
        })),
    });
    json!({
        "block": tasks.block,
        "binding": tasks.binding_render,
        "horizon": tasks.horizon,
        "falsification": falsify,
        "adequacy": adequacy,
        "ordering": order,
        "key_movement": keymove,
    })
}

/// Machine-readable report: the outcome matrix plus, per operation, all
/// four task reports and either the code skeleton or the fallback. Field
/// order and content are deterministic for byte-stable golden tests.
pub fn render_report(report: &SynthesisReport) -> Value {
    let ops: Vec<Value> = report
        .ops
        .iter()
        .map(|o| {
            json!({
                "op": o.op,
                "outcome": o.outcome.label(),
                "tasks": o.tasks.as_ref().map(|t| tasks_json(t, &report.delta)),
                "code": o.outcome.code().map(|ir| serde_json::to_value(ir).unwrap()),
                "rcu": o.outcome.rcu().map(|r| json!({
                    "cause": r.cause.as_str(),
                    "summary": r.summary,
                    "witness": r.witness,
                })),
            })
        })
        .collect();
    json!({
        "schema_version": 1,
        "structure": report.structure,
        "guard": report.guard.as_str(),
        "depth": report.depth,
        "horizon_override": report.horizon_override,
        "degenerate_horizon": report.degenerate_horizon,
        "delta": report.delta.facts(),
        "outcome": report.outcome_matrix(),
        "ops": ops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{builtin_bundle, parse_knowledge, parse_theory};

    fn synth(bundle: &str) -> SynthesisReport {
        let b = builtin_bundle(bundle).unwrap();
        synthesize(&b, &SynthConfig::default()).unwrap()
    }

    #[test]
    fn list_insert_skeleton_matches_expected_shape() {
        let report = synth("linked_list");
        let ins = report.op("ins").unwrap();
        let ir = ins.outcome.code().expect("ins synthesizes");
        assert_eq!(ins.outcome.label(), "Success");
        assert_eq!(ir.locks, vec!["x", "y"]);
        assert_eq!(
            ir.validate,
            vec!["reach(x)", "edge(x,y)", "k_x < k_tau < k_y"]
        );
        let steps: Vec<String> = ir.steps.iter().map(|s| s.to_string()).collect();
        assert_eq!(steps, vec!["link(tau,y)", "link(x,tau)"]);
        assert_eq!(ir.unlocks, vec!["y", "x"]);
        assert!(ir.abort_on_validate_failure);
        assert_eq!(ir.traversal.as_deref(), Some("member"));
    }

    #[test]
    fn list_insert_renders_canonical_fragment() {
        let report = synth("linked_list");
        let ir = report.op("ins").unwrap().outcome.code().unwrap();
        let text = render_text(ir);
        assert_eq!(
            text,
            "// ins (block1)\n\
             lock(x)\n\
             lock(y)\n\
             if validate(reach(x), edge(x,y), k_x < k_tau < k_y) {\n  \
               tau.next := y;\n  \
               x.next := tau;\n\
             }\n\
             unlock(y)\n\
             unlock(x)\n"
        );
    }

    #[test]
    fn list_delete_is_single_guarded_step() {
        let report = synth("linked_list");
        let del = report.op("del").unwrap();
        let ir = del.outcome.code().expect("del synthesizes");
        assert_eq!(ir.validate, vec!["edge(x,y)", "edge(y,z)", "k_tau = k_y"]);
        let text = render_text(ir);
        assert!(text.contains("  x.next := z;\n"));
        assert_eq!(text.matches(" := ").count(), 1);
    }

    #[test]
    fn observers_pass_through_unchanged() {
        let report = synth("linked_list");
        let member = report.op("member").unwrap();
        assert_eq!(member.outcome.label(), "Unchanged");
        assert!(member.tasks.is_none());
        let text = render_text(member.outcome.code().unwrap());
        assert!(text.contains("traverse(member)"));
        assert!(!text.contains("lock("));
    }

    #[test]
    fn outcome_matrix_across_builtin_structures() {
        let expect = |name: &str, rows: &[(&str, &str)]| {
            let report = synth(name);
            let matrix = report.outcome_matrix();
            for (op, label) in rows {
                assert_eq!(matrix[*op], *label, "{name} {op}");
            }
            assert_eq!(matrix.len(), rows.len(), "{name} has exactly these ops");
        };
        expect(
            "linked_list",
            &[("member", "Unchanged"), ("ins", "Success"), ("del", "Success")],
        );
        expect(
            "external_bst",
            &[("member", "Unchanged"), ("ins", "Success"), ("del", "Success")],
        );
        expect(
            "internal_bst",
            &[("member", "Unchanged"), ("ins", "Success"), ("del", "RCU")],
        );
    }

    #[test]
    fn internal_delete_falls_back_for_key_movement() {
        let report = synth("internal_bst");
        let del = report.op("del").unwrap();
        let rcu = del.outcome.rcu().expect("del recommends the fallback");
        assert_eq!(rcu.cause, RcuCause::KeyMovement);
        assert_eq!(rcu.witness["kind"], "key-movement");
        // The witness names the relocated in-order successor.
        assert_eq!(rcu.witness["key"], 30);
        assert_eq!(rcu.witness["node"], "n3");
        assert!(rcu.summary.contains("key 30"));
        // Earlier gates passed: ordering found valid orders, so the first
        // failing gate — key movement — decides.
        let tasks = del.tasks.as_ref().unwrap();
        assert!(!tasks.order.valid.is_empty());
    }

    #[test]
    fn starved_lock_heuristic_forces_fallback() {
        // Locking only the head leaves the (n1,t) gap open: an environment
        // insert there falsifies insert's edge(x,y) and delete's edge(y,z),
        // so both destructive operations fall back.
        let b = builtin_bundle("linked_list").unwrap();
        let config = SynthConfig {
            heuristic: Some(vec!["h".into()]),
            ..SynthConfig::default()
        };
        let report = synthesize(&b, &config).unwrap();
        let ins = report.op("ins").unwrap();
        let rcu = ins.outcome.rcu().expect("a single head lock is not enough");
        assert_eq!(rcu.cause, RcuCause::InadequateLocks);
        assert_eq!(rcu.witness["kind"], "inadequate-locks");
        assert_eq!(rcu.witness["violated"], "edge(x,y)");
        assert!(rcu.witness["trajectory"].is_array());
        let del = report.op("del").unwrap();
        let del_rcu = del.outcome.rcu().expect("delete loses its y window");
        assert_eq!(del_rcu.cause, RcuCause::InadequateLocks);
        assert_eq!(del_rcu.witness["violated"], "edge(y,z)");
    }

    #[test]
    fn unknown_heuristic_node_is_an_error() {
        let b = builtin_bundle("linked_list").unwrap();
        let config = SynthConfig {
            heuristic: Some(vec!["n9".into()]),
            ..SynthConfig::default()
        };
        match synthesize(&b, &config) {
            Err(SynthError::UnknownNode { name }) => assert_eq!(name, "n9"),
            other => panic!("expected unknown-node error, got {other:?}"),
        }
    }

    #[test]
    fn unorderable_steps_recommend_fallback() {
        // A cut that leaves y unreachable without licensing its removal:
        // the only order breaks reachability, so the ordering gate fails.
        let theory = parse_theory(include_str!("dsl/bundles/linked_list.theory.dsl")).unwrap();
        let knowledge = parse_knowledge(
            "#op cut block1 pre [reach(x), edge(x,y), edge(y,z), suffix(z), \
             key(y,Ky), key(tau,Kt), Kt = Ky] post [edge(x,z)] steps [link(x,z)].\n\
             #primitive link modifies 1 causes edge.\n\
             #read deref uses edge.\n",
            &theory,
        )
        .unwrap();
        let bundle = Bundle { name: "cut_list".into(), theory, knowledge };
        let report = synthesize(&bundle, &SynthConfig::default()).unwrap();
        let cut = report.op("cut").unwrap();
        let rcu = cut.outcome.rcu().expect("no order keeps y reachable");
        assert_eq!(rcu.cause, RcuCause::NoValidOrder);
        assert_eq!(rcu.witness["kind"], "rejected-orders");
        assert_eq!(rcu.witness["rejected"].as_array().unwrap().len(), 1);
    }

    #[test]
    fn degenerate_horizon_is_flagged() {
        let b = builtin_bundle("linked_list").unwrap();
        let config = SynthConfig { horizon: Some(0), ..SynthConfig::default() };
        let report = synthesize(&b, &config).unwrap();
        assert!(report.degenerate_horizon);
        // With no interference possible nothing is falsifiable, so every
        // fluent conjunct survives and the validate set holds only the key
        // comparisons.
        let ins = report.op("ins").unwrap();
        let tasks = ins.tasks.as_ref().unwrap();
        assert!(tasks.falsify.verdicts.iter().all(|v| !v.falsifiable));
        let ir = ins.outcome.code().unwrap();
        assert_eq!(ir.validate, vec!["k_x < k_tau < k_y"]);
    }

    #[test]
    fn reports_are_byte_stable() {
        let a = serde_json::to_string_pretty(&render_report(&synth("internal_bst"))).unwrap();
        let b = serde_json::to_string_pretty(&render_report(&synth("internal_bst"))).unwrap();
        assert_eq!(a, b);
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["outcome"]["del"], "RCU");
        assert_eq!(v["ops"][0]["op"], "member");
        assert_eq!(v["schema_version"], 1);
    }
}
