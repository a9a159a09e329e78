//! `prunepack` command-line driver.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 infeasible budget.
//! Results go to stdout as JSON (or plain numbers); logs go to stderr and
//! are controlled by `RUST_LOG`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::{json, Value};

use prunepack::importance::{importance_from_tensors, parse_scores};
use prunepack::{
    build_coupling_groups, combined_loss, emit_report, fit_reconstruction, ikd_loss, kd_loss, load_tensor_dir,
    network_flops, parse_graph, parse_latency_table, plan_prune, Budget, BudgetKind, DistillInputs, Error, IkdPair,
    ImportanceMode, LossWeights, NetworkGraph, PlanOptions, PrunePlan, SolverKind,
};

#[derive(Parser, Debug)]
#[command(name = "prunepack", version, about = "Knapsack channel pruning planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Plan which channels to keep under a budget.
    Plan(PlanArgs),
    /// Print the total FLOPs of a graph.
    Flops {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Print the coupling groups of a graph as JSON.
    Groups {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Print distillation losses for a tensor dump.
    Losses(LossArgs),
    /// Rebuild the report of an existing plan.
    Report {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        /// Print the JSON report instead of the table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["scores", "tensors"])))]
#[command(group(ArgGroup::new("budget").required(true).args(["budget_fraction", "budget_flops", "budget_latency_us"])))]
struct PlanArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Precomputed scores `{layer_id: [score, ...]}`.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Tensor dump with `weights/<id>` and `grads/<id>/<k>`.
    #[arg(long)]
    tensors: Option<PathBuf>,
    #[arg(long)]
    budget_fraction: Option<f64>,
    #[arg(long)]
    budget_flops: Option<f64>,
    #[arg(long, requires = "latency_table")]
    budget_latency_us: Option<f64>,
    /// Per-layer microseconds `{layer_id: us}`.
    #[arg(long)]
    latency_table: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Solver::Dp)]
    solver: Solver,
    #[arg(long, value_enum, default_value_t = Mode::AbsProduct)]
    importance_mode: Mode,
    #[arg(long, default_value_t = 1)]
    min_keep: usize,
    /// Clamp negative channel values at zero (needed for signed scores).
    #[arg(long)]
    clamp_negative: bool,
    /// Fail instead of switching to greedy when the DP exceeds its memory cap.
    #[arg(long)]
    no_greedy_fallback: bool,
    /// Plan output path; reports are written next to it as
    /// `<stem>.report.json` and `<stem>.report.txt`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct LossArgs {
    #[arg(long)]
    tensors: PathBuf,
    /// Fit every reconstruction matrix with this ridge strength instead of
    /// reading `reconstruction/<id>`.
    #[arg(long)]
    fit_ridge: Option<f64>,
    /// Cross-entropy term for the combined loss.
    #[arg(long)]
    ce: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    lambda_ikd: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_kd: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Solver {
    Dp,
    Greedy,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Mode {
    AbsProduct,
    AbsTaylor,
    SignedTaylor,
}

impl From<Mode> for ImportanceMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::AbsProduct => ImportanceMode::AbsProduct,
            Mode::AbsTaylor => ImportanceMode::AbsTaylor,
            Mode::SignedTaylor => ImportanceMode::SignedTaylor,
        }
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn write(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn load_graph(path: &Path) -> Result<NetworkGraph, Error> {
    parse_graph(&read(path)?)
}

fn report_paths(out: &Path) -> (PathBuf, PathBuf) {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "plan".into());
    let dir = out.parent().unwrap_or(Path::new(""));
    (dir.join(format!("{stem}.report.json")), dir.join(format!("{stem}.report.txt")))
}

fn plan(args: PlanArgs) -> Result<Value, Error> {
    let graph = load_graph(&args.graph)?;
    let mode = ImportanceMode::from(args.importance_mode);
    let importances = match (&args.scores, &args.tensors) {
        (Some(path), _) => parse_scores(&read(path)?, mode)?,
        (None, Some(dir)) => importance_from_tensors(&graph, &load_tensor_dir(dir)?, mode)?,
        (None, None) => unreachable!("clap requires a score source"),
    };
    let budget = match (args.budget_fraction, args.budget_flops, args.budget_latency_us) {
        (Some(f), _, _) => Budget::fraction(f),
        (_, Some(n), _) => Budget { kind: BudgetKind::FlopsAbsolute, value: n },
        (_, _, Some(us)) => Budget::latency_us(us),
        _ => unreachable!("clap requires a budget"),
    };
    let latency_table = args.latency_table.as_deref().map(|p| read(p).and_then(|t| parse_latency_table(&t))).transpose()?;
    let options = PlanOptions {
        solver: match args.solver {
            Solver::Dp => SolverKind::Dp,
            Solver::Greedy => SolverKind::Greedy,
        },
        importance_mode: mode,
        min_keep: args.min_keep,
        clamp_negative: args.clamp_negative,
        greedy_fallback: !args.no_greedy_fallback,
        latency_table,
        ..PlanOptions::default()
    };

    let plan = plan_prune(&graph, &importances, &budget, &options)?;
    let report = emit_report(&plan, &graph)?;
    let (json_path, text_path) = report_paths(&args.out);
    write(&args.out, &plan.to_json())?;
    write(&json_path, &report.to_json())?;
    write(&text_path, &report.render_text())?;
    info!("wrote {}, {}, {}", args.out.display(), json_path.display(), text_path.display());

    Ok(json!({
        "plan": args.out,
        "report_json": json_path,
        "report_text": text_path,
        "solver": plan.solver,
        "solver_calls": plan.stats.solver_calls,
        "fell_back_to_greedy": plan.stats.fell_back_to_greedy,
        "original_flops": plan.original_flops,
        "achieved_flops": plan.achieved_flops,
        "achieved_ratio": plan.achieved_ratio,
        "achieved_latency_us": plan.achieved_latency_us,
    }))
}

fn groups(graph: &Path) -> Result<Value, Error> {
    let graph = load_graph(graph)?;
    let coupling = build_coupling_groups(&graph)?;
    Ok(serde_json::to_value(coupling.groups()).expect("groups serialize"))
}

fn losses(args: LossArgs) -> Result<Value, Error> {
    let inputs = DistillInputs::from_tensors(&load_tensor_dir(&args.tensors)?)?;
    let kd = match (&inputs.teacher_logits, &inputs.student_logits) {
        (Some(t), Some(s)) => Some(kd_loss(t, s)?),
        _ => None,
    };
    let mut layers = Vec::new();
    let mut ikd = 0.0;
    for (teacher, student, stored) in &inputs.layers {
        let m = match (args.fit_ridge, stored) {
            (Some(lambda), _) => fit_reconstruction(teacher, student, lambda)?,
            (None, Some(m)) => m.clone(),
            (None, None) => {
                return Err(Error::MissingTensor(format!(
                    "reconstruction/{} (or pass --fit-ridge)",
                    teacher.layer_id
                )))
            }
        };
        let loss = ikd_loss(&[IkdPair { teacher, student, reconstruction: &m }])?;
        ikd += loss;
        layers.push(json!({ "layer": teacher.layer_id, "ikd": loss }));
    }
    let weights = LossWeights { lambda_ikd: args.lambda_ikd, lambda_kd: args.lambda_kd };
    let combined = args.ce.map(|ce| combined_loss(ce, ikd, kd.unwrap_or(0.0), &weights)).transpose()?;
    Ok(json!({ "kd": kd, "ikd": ikd, "layers": layers, "combined": combined }))
}

fn report(graph: &Path, plan: &Path, as_json: bool) -> Result<String, Error> {
    let graph = load_graph(graph)?;
    let plan = PrunePlan::from_json(&read(plan)?)?;
    let report = emit_report(&plan, &graph)?;
    Ok(if as_json { report.to_json() } else { report.render_text() })
}

fn run(cli: Cli) -> Result<String, Error> {
    let pretty = |v: Value| serde_json::to_string_pretty(&v).expect("json serializes") + "\n";
    match cli.command {
        Command::Plan(args) => plan(args).map(pretty),
        Command::Flops { graph } => Ok(format!("{}\n", network_flops(&load_graph(&graph)?)?)),
        Command::Groups { graph } => groups(&graph).map(pretty),
        Command::Losses(args) => losses(args).map(pretty),
        Command::Report { graph, plan, json } => report(&graph, &plan, json),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::InfeasibleBudget { .. }) { 2 } else { 1 })
        }
    }
}
