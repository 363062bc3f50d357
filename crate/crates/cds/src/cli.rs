//! Command-line orchestration. Four subcommands cover the pipeline:
//! `synth` runs instance search, the four reasoning tasks, and code
//! generation; `tasks` stops after the reasoning tasks; `delta` prints the
//! least instance; `oracle` replays synthesized code under every
//! interleaving and prints a verdict document.
//!
//! Exit codes are part of the contract: 0 success, 2 at least one
//! operation fell back to a copy-based recommendation, 3 input could not
//! be read or parsed, 4 the pipeline failed internally (no instance within
//! the depth bound, unknown lock override, exploration budget), 5 the
//! oracle found a counterexample. Flag misuse exits 64.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::codegen::{render_report, render_text, synthesize, CodeIR, SynthConfig, SynthError};
use crate::dsl::{builtin_bundle, parse_knowledge, parse_theory, Bundle, BUILTIN_NAMES};
use crate::instance::least_delta;
use crate::interference::GuardMode;
use crate::oracle::{explore, Harness, OracleError, ThreadSpec};

const EXIT_OK: i32 = 0;
const EXIT_FALLBACK: i32 = 2;
const EXIT_PARSE: i32 = 3;
const EXIT_INTERNAL: i32 = 4;
const EXIT_COUNTEREXAMPLE: i32 = 5;
const EXIT_USAGE: i32 = 64;

/// Exploration ceiling for `oracle`; desk-scale runs stay far below it.
const ORACLE_BUDGET: usize = 500_000;

#[derive(Parser)]
#[command(
    name = "cds",
    version,
    about = "Synthesize provably safe lock-based concurrent code for heap-linked structures"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full pipeline and emit code skeletons or fallback advice.
    Synth(RunArgs),
    /// Run the four reasoning tasks and report them without generating code.
    Tasks(RunArgs),
    /// Print the least instance on which every operation fires.
    Delta(DeltaArgs),
    /// Execute code IR under all interleavings and print a verdict.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct SourceArgs {
    /// Built-in structure: linked_list, external_bst, or internal_bst.
    #[arg(long, conflicts_with_all = ["theory", "knowledge"])]
    builtin: Option<String>,
    /// Structure theory DSL file (pair with --knowledge).
    #[arg(long, requires = "knowledge")]
    theory: Option<PathBuf>,
    /// Operation knowledge DSL file (pair with --theory).
    #[arg(long, requires = "theory")]
    knowledge: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Restrict the report to these operations (comma-separated).
    #[arg(long, value_delimiter = ',')]
    op: Vec<String>,
    /// Interference horizon in ticks; defaults to each block's step count
    /// plus two. Zero disables interference (degenerate, flagged).
    #[arg(long)]
    horizon: Option<usize>,
    /// How locks exclude interference during analysis.
    #[arg(long, value_enum, default_value_t = GuardArg::Protocol)]
    guard: GuardArg,
    /// Lock these instead of the window heuristic: window symbols (x, y)
    /// or instance node names (h, n1, t), comma-separated. An empty value
    /// means no locks at all.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    heuristic: Option<Vec<String>>,
    /// Instance-search depth bound.
    #[arg(long, default_value_t = 4)]
    depth: usize,
    /// Directory for report.json plus per-operation .ir.json and .txt.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stdout rendering.
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
}

#[derive(Args)]
struct DeltaArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Instance-search depth bound.
    #[arg(long, default_value_t = 4)]
    depth: usize,
    /// Stdout rendering.
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Code IR files to run; thread i executes file i modulo the count.
    #[arg(value_name = "IR_FILE")]
    ir: Vec<PathBuf>,
    /// How many threads to schedule.
    #[arg(long, default_value_t = 2)]
    threads: usize,
    /// Instance-search depth bound (pins default thread keys from the
    /// least instance).
    #[arg(long, default_value_t = 4)]
    depth: usize,
    /// Directory for verdict.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stdout rendering.
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum GuardArg {
    /// A window overlapping any held lock disables the whole action.
    Protocol,
    /// Only the written node is guarded; partial effects allowed.
    Literal,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    /// Human-readable summary.
    Text,
    /// The full report as JSON.
    Structured,
}

/// An error carrying its exit code and a message for standard error.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn parse(message: impl Into<String>) -> Failure {
        Failure { code: EXIT_PARSE, message: message.into() }
    }

    fn internal(message: impl Into<String>) -> Failure {
        Failure { code: EXIT_INTERNAL, message: message.into() }
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Failure {
        Failure::internal(e.to_string())
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Failure {
        Failure::internal(e.to_string())
    }
}

impl SourceArgs {
    fn load(&self) -> Result<Bundle, Failure> {
        match (&self.builtin, &self.theory, &self.knowledge) {
            (Some(name), None, None) => builtin_bundle(name).map_err(|_| Failure {
                code: EXIT_USAGE,
                message: format!(
                    "unknown builtin `{name}`; expected one of {}",
                    BUILTIN_NAMES.join(", ")
                ),
            }),
            (None, Some(theory_path), Some(knowledge_path)) => {
                let theory_src = fs::read_to_string(theory_path).map_err(|e| {
                    Failure::parse(format!("cannot read {}: {e}", theory_path.display()))
                })?;
                let knowledge_src = fs::read_to_string(knowledge_path).map_err(|e| {
                    Failure::parse(format!("cannot read {}: {e}", knowledge_path.display()))
                })?;
                let theory = parse_theory(&theory_src)
                    .map_err(|e| Failure::parse(format!("{}: {e}", theory_path.display())))?;
                let knowledge = parse_knowledge(&knowledge_src, &theory)
                    .map_err(|e| Failure::parse(format!("{}: {e}", knowledge_path.display())))?;
                let name = theory_path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "custom".to_string());
                Ok(Bundle { name, theory, knowledge })
            }
            _ => Err(Failure {
                code: EXIT_USAGE,
                message: "pass exactly one input: --builtin NAME, or --theory and --knowledge"
                    .to_string(),
            }),
        }
    }
}

impl RunArgs {
    fn config(&self) -> SynthConfig {
        SynthConfig {
            horizon: self.horizon,
            guard: match self.guard {
                GuardArg::Protocol => GuardMode::Protocol,
                GuardArg::Literal => GuardMode::Literal,
            },
            // `--heuristic` with no value (or an empty value) means lock
            // nothing; absent means use the window heuristic.
            heuristic: self
                .heuristic
                .as_ref()
                .map(|v| v.iter().filter(|s| !s.is_empty()).cloned().collect()),
            depth: self.depth,
        }
    }
}

/// Parse arguments and run; the return value is the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits; everything else is
            // flag misuse, kept away from the meaningful exit codes.
            let code = if e.exit_code() == 0 { EXIT_OK } else { EXIT_USAGE };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.cmd {
        Cmd::Synth(args) => cmd_synth(&args),
        Cmd::Tasks(args) => cmd_tasks(&args),
        Cmd::Delta(args) => cmd_delta(&args),
        Cmd::Oracle(args) => cmd_oracle(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn write_out(dir: &Path, file: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::internal(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(file);
    fs::write(&path, contents)
        .map_err(|e| Failure::internal(format!("cannot write {}: {e}", path.display())))
}

fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

/// Run synthesis, apply the op filter, and return the report JSON plus the
/// per-operation skeletons.
fn synth_pipeline(args: &RunArgs) -> Result<(Value, Vec<(String, CodeIR)>, bool), Failure> {
    let bundle = args.source.load()?;
    let mut report = synthesize(&bundle, &args.config())?;
    if !args.op.is_empty() {
        for name in &args.op {
            if report.op(name).is_none() {
                return Err(Failure::internal(format!(
                    "operation `{name}` does not exist in this knowledge base"
                )));
            }
        }
        report.ops.retain(|o| args.op.contains(&o.op));
    }
    let codes: Vec<(String, CodeIR)> = report
        .ops
        .iter()
        .filter_map(|o| o.outcome.code().map(|c| (o.op.clone(), c.clone())))
        .collect();
    Ok((render_report(&report), codes, report.any_rcu()))
}

fn cmd_synth(args: &RunArgs) -> Result<i32, Failure> {
    let (report_json, codes, any_rcu) = synth_pipeline(args)?;
    if let Some(dir) = &args.out {
        write_out(dir, "report.json", &pretty(&report_json))?;
        for (op, code) in &codes {
            let ir = serde_json::to_value(code).expect("code IR serializes");
            write_out(dir, &format!("{op}.ir.json"), &pretty(&ir))?;
            write_out(dir, &format!("{op}.txt"), &render_text(code))?;
        }
    }
    match args.format {
        FormatArg::Structured => print!("{}", pretty(&report_json)),
        FormatArg::Text => print!("{}", synth_text(&report_json)),
    }
    Ok(if any_rcu { EXIT_FALLBACK } else { EXIT_OK })
}

/// One line per operation, plus the fallback cause where present.
fn synth_text(report: &Value) -> String {
    let mut out = String::new();
    let structure = report["structure"].as_str().unwrap_or("?");
    out.push_str(&format!("structure: {structure}\n"));
    if report["degenerate_horizon"].as_bool() == Some(true) {
        out.push_str("warning: horizon 0 disables interference; verdicts are degenerate\n");
    }
    for op in report["ops"].as_array().into_iter().flatten() {
        let name = op["op"].as_str().unwrap_or("?");
        let outcome = op["outcome"].as_str().unwrap_or("?");
        match op.get("rcu").and_then(|r| r.as_object()) {
            Some(rcu) => {
                let cause = rcu["cause"].as_str().unwrap_or("?");
                out.push_str(&format!("{name}: {outcome} ({cause})\n"));
                if let Some(summary) = rcu["summary"].as_str() {
                    out.push_str(&format!("  {summary}\n"));
                }
            }
            None => out.push_str(&format!("{name}: {outcome}\n")),
        }
    }
    out
}

fn cmd_tasks(args: &RunArgs) -> Result<i32, Failure> {
    let (report_json, _, _) = synth_pipeline(args)?;
    let tasks_json = json!({
        "schema_version": report_json["schema_version"],
        "structure": report_json["structure"],
        "guard": report_json["guard"],
        "depth": report_json["depth"],
        "horizon_override": report_json["horizon_override"],
        "degenerate_horizon": report_json["degenerate_horizon"],
        "ops": report_json["ops"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|op| json!({ "op": op["op"], "tasks": op["tasks"] }))
            .collect::<Vec<_>>(),
    });
    if let Some(dir) = &args.out {
        write_out(dir, "tasks.json", &pretty(&tasks_json))?;
    }
    match args.format {
        FormatArg::Structured => print!("{}", pretty(&tasks_json)),
        FormatArg::Text => print!("{}", tasks_text(&tasks_json)),
    }
    Ok(EXIT_OK)
}

/// Four lines per destructive operation, one per reasoning task.
fn tasks_text(report: &Value) -> String {
    let mut out = String::new();
    let structure = report["structure"].as_str().unwrap_or("?");
    out.push_str(&format!("structure: {structure}\n"));
    if report["degenerate_horizon"].as_bool() == Some(true) {
        out.push_str("warning: horizon 0 disables interference; verdicts are degenerate\n");
    }
    for op in report["ops"].as_array().into_iter().flatten() {
        let name = op["op"].as_str().unwrap_or("?");
        let tasks = &op["tasks"];
        if tasks.is_null() {
            out.push_str(&format!("{name}: observer, nothing to analyze\n"));
            continue;
        }
        let unfalsify: Vec<&str> = tasks["falsification"]["unfalsify"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|v| v.as_str())
            .collect();
        out.push_str(&format!(
            "{name}: falsification — unfalsifiable: [{}]\n",
            unfalsify.join(", ")
        ));
        let adequacy = &tasks["adequacy"];
        let locks: Vec<&str> = adequacy["locks"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|v| v.as_str())
            .collect();
        if adequacy["adequate"].as_bool() == Some(true) {
            out.push_str(&format!("{name}: adequacy — locks [{}] adequate\n", locks.join(", ")));
        } else {
            let violated = adequacy["violated"].as_str().unwrap_or("?");
            out.push_str(&format!(
                "{name}: adequacy — locks [{}] inadequate, violates {violated}\n",
                locks.join(", ")
            ));
        }
        let ordering = &tasks["ordering"];
        let valid = ordering["valid"].as_array().map(|v| v.len()).unwrap_or(0);
        let rejected = ordering["rejected_count"].as_u64().unwrap_or(0);
        out.push_str(&format!(
            "{name}: ordering — {valid} valid order(s), {rejected} rejected\n"
        ));
        let keymove = tasks["key_movement"]["keymove"].as_bool() == Some(true);
        out.push_str(&format!(
            "{name}: key movement — {}\n",
            if keymove { "possible (locks cannot protect the traversal)" } else { "none" }
        ));
    }
    out
}

fn cmd_delta(args: &DeltaArgs) -> Result<i32, Failure> {
    let bundle = args.source.load()?;
    let delta = least_delta(&bundle, args.depth).map_err(|e| Failure::internal(e.to_string()))?;
    let choices: Value = delta
        .choices
        .iter()
        .map(|(op, c)| {
            let block = &bundle.knowledge.op(op).expect("choice references a known op").blocks
                [c.block_index];
            let window: Value = c
                .binding
                .nodes
                .iter()
                .map(|(sym, &n)| (sym.clone(), Value::from(delta.state.name(n))))
                .collect::<serde_json::Map<_, _>>()
                .into();
            let keys: Value = c
                .binding
                .keys
                .iter()
                .map(|(var, &k)| (var.clone(), Value::from(k)))
                .collect::<serde_json::Map<_, _>>()
                .into();
            (op.clone(), json!({ "block": block.name, "window": window, "keys": keys }))
        })
        .collect::<serde_json::Map<_, _>>()
        .into();
    let delta_json = json!({
        "schema_version": 1,
        "structure": bundle.name,
        "depth": args.depth,
        "facts": delta.state.facts(),
        "choices": choices,
    });
    match args.format {
        FormatArg::Structured => print!("{}", pretty(&delta_json)),
        FormatArg::Text => {
            let mut out = String::new();
            for fact in delta.state.facts() {
                out.push_str(&fact);
                out.push('\n');
            }
            for (op, c) in &delta.choices {
                out.push_str(&format!(
                    "choice {op}: {} {}\n",
                    bundle.knowledge.op(op).expect("known op").blocks[c.block_index].name,
                    c.binding.render(&delta.state)
                ));
            }
            print!("{out}");
        }
    }
    Ok(EXIT_OK)
}

fn cmd_oracle(args: &OracleArgs) -> Result<i32, Failure> {
    let bundle = args.source.load()?;
    let mut irs = Vec::new();
    for path in &args.ir {
        let src = fs::read_to_string(path)
            .map_err(|e| Failure::parse(format!("cannot read {}: {e}", path.display())))?;
        let ir: CodeIR = serde_json::from_str(&src)
            .map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?;
        irs.push(ir);
    }
    let delta = least_delta(&bundle, args.depth).map_err(|e| Failure::internal(e.to_string()))?;
    let specs: Vec<ThreadSpec> = if irs.is_empty() {
        Vec::new()
    } else {
        (0..args.threads)
            .map(|i| {
                let ir = irs[i % irs.len()].clone();
                // Pin each thread to the key its block matched on the least
                // instance, the same run synthesis reasoned about.
                let key = delta.choices.get(&ir.op).and_then(|c| {
                    let block = &bundle.knowledge.op(&ir.op)?.blocks[c.block_index];
                    let var = block.pre_atoms().find_map(|a| {
                        match (a.pred.as_str(), a.args.first(), a.args.get(1)) {
                            ("key", Some(crate::dsl::Term::Sym(s)), Some(crate::dsl::Term::Var(v)))
                                if block.fresh.first() == Some(s) =>
                            {
                                Some(v.clone())
                            }
                            _ => None,
                        }
                    })?;
                    c.binding.keys.get(&var).copied()
                });
                ThreadSpec { ir, key }
            })
            .collect()
    };
    let harness = Harness::new(&bundle, &delta.state, &specs)?;
    let verdict = explore(&harness, ORACLE_BUDGET)?;
    let verdict_json = verdict.to_json();
    if let Some(dir) = &args.out {
        write_out(dir, "verdict.json", &pretty(&verdict_json))?;
    }
    match args.format {
        FormatArg::Structured => print!("{}", pretty(&verdict_json)),
        FormatArg::Text => {
            let mut out = String::new();
            for flag in
                ["invariant-ok", "mutual-exclusion-ok", "linearizable", "lemma1-ok", "lemma2-ok"]
            {
                out.push_str(&format!("{flag}: {}\n", verdict_json[flag]));
            }
            let stats = &verdict.stats;
            out.push_str(&format!(
                "explored: {} configurations, {} transitions, {} final states\n",
                stats.configurations, stats.transitions, stats.final_states
            ));
            if let Some(ce) = &verdict.counterexample {
                out.push_str(&format!("counterexample ({}): {}\n", ce.check, ce.detail));
                out.push_str(&format!(
                    "schedule: [{}]\n",
                    ce.schedule.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ")
                ));
                for event in &ce.trace.events {
                    out.push_str(&format!("  t{} {}\n", event.thread, event.action));
                }
            }
            print!("{out}");
        }
    }
    Ok(if verdict.all_ok() { EXIT_OK } else { EXIT_COUNTEREXAMPLE })
}
