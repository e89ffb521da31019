use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cournot::gap;
use cournot::harness::{self, BenchConfig, CostFamily, GenSpec};
use cournot::solvers::{self, Algorithm, SolveLimits, SolveOptions};
use cournot::{Instance, StrategyProfile};

/// Equilibrium solvers and benchmarks for Nash-Cournot models with concave costs.
#[derive(Parser)]
#[command(name = "cournot", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded random instance.
    Gen(GenArgs),
    /// Solve an instance for a global or local equilibrium.
    Solve(SolveArgs),
    /// Evaluate the gap function at a point.
    Gap(GapArgs),
    /// Brute-force grid search for an equilibrium (N <= 4).
    Oracle(OracleArgs),
    /// Run seeded benchmark cells and write a CSV summary.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of firms.
    #[arg(long = "N")]
    firms: usize,
    /// Number of firms with concave costs.
    #[arg(long = "n")]
    n_concave: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "log")]
    family: CostFamily,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Tolerance {
    /// Tolerance relative to the instance scale alpha * sum(u).
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    /// Interpret --eps as an absolute tolerance.
    #[arg(long)]
    absolute: bool,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

impl Tolerance {
    fn eps_for(&self, inst: &Instance) -> f64 {
        if self.absolute {
            self.eps
        } else {
            self.eps * inst.scale()
        }
    }

    fn limits(&self) -> SolveLimits {
        let mut limits = SolveLimits::default();
        if let Some(k) = self.max_iter {
            limits.max_iterations = k;
        }
        limits.time_limit = harness::time_limit(self.time_limit);
        limits
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, conflicts_with = "local")]
    global: bool,
    #[arg(long)]
    local: bool,
    #[command(flatten)]
    tol: Tolerance,
    #[arg(long = "in")]
    input: PathBuf,
    /// Per-iteration JSON Lines trace.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct GapArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// JSON array with one quantity per firm.
    #[arg(long)]
    point: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Grid points per axis.
    #[arg(long, default_value_t = 101)]
    grid: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated NxN cells, e.g. "5x5,50x5".
    #[arg(long)]
    cells: String,
    #[arg(long, default_value = "global")]
    algo: Algorithm,
    #[command(flatten)]
    tol: Tolerance,
    #[arg(long, default_value_t = 10)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    #[arg(long, default_value = "log")]
    family: CostFamily,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-run JSON Lines log.
    #[arg(long)]
    log: Option<PathBuf>,
}

fn read_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Instance::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => match io::stdout().lock().write_all(text.as_bytes()) {
            Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        },
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    emit(None, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn threads() -> Result<Option<usize>> {
    match std::env::var("COURNOT_THREADS") {
        Ok(v) => {
            let t: usize = v.trim().parse().context("COURNOT_THREADS must be a positive integer")?;
            if t == 0 {
                bail!("COURNOT_THREADS must be a positive integer");
            }
            Ok(Some(t))
        }
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Gen(a) => {
            let inst = harness::generate(&GenSpec::new(a.firms, a.n_concave, a.seed).with_family(a.family))?;
            emit(a.out.as_deref(), &(inst.to_json() + "\n"))?;
            Ok(0)
        }
        Command::Solve(a) => {
            let inst = read_instance(&a.input)?;
            let algorithm = if a.local { Algorithm::Local } else { Algorithm::Global };
            let eps = a.tol.eps_for(&inst);
            let opts = SolveOptions::new(eps)
                .with_limits(a.tol.limits())
                .with_trace(a.log.is_some());
            let report = solvers::solve(&inst, algorithm, &opts);
            if let (Some(path), Some(trace)) = (&a.log, &report.trace) {
                fs::write(path, trace.to_jsonl()).with_context(|| format!("writing {}", path.display()))?;
            }
            let mut summary = serde_json::to_value(&report)?;
            summary["algorithm"] = algorithm.as_str().into();
            summary["eps"] = eps.into();
            summary["globally_certified"] = report.globally_certified(eps).into();
            print_json(&summary)?;
            Ok(report.status.exit_code() as u8)
        }
        Command::Gap(a) => {
            let inst = read_instance(&a.input)?;
            let text = fs::read_to_string(&a.point).with_context(|| format!("reading {}", a.point.display()))?;
            let x: StrategyProfile = serde_json::from_str(&text).context("point must be a JSON array of numbers")?;
            let g = gap::gap(&inst, &x)?;
            let out = serde_json::json!({
                "gap": g.value,
                "max_improvement": g.max_improvement(),
                "improvements": g.improvements,
                "best_responses": g.per_firm_argmins,
            });
            print_json(&out)?;
            Ok(0)
        }
        Command::Oracle(a) => {
            let inst = read_instance(&a.input)?;
            let r = harness::oracle_equilibrium(&inst, a.grid)?;
            print_json(&r)?;
            Ok(0)
        }
        Command::Bench(a) => {
            let mut cfg = BenchConfig::new(harness::parse_cells(&a.cells)?, a.algo);
            if a.tol.absolute {
                bail!("bench takes a relative --eps");
            }
            cfg.eps_rel = a.tol.eps;
            cfg.limits = a.tol.limits();
            cfg.instances_per_cell = a.instances;
            cfg.base_seed = a.base_seed;
            cfg.family = a.family;
            cfg.threads = threads()?;
            let result = harness::bench(&cfg);
            let mut csv = Vec::new();
            harness::write_csv(&result.rows, &mut csv)?;
            emit(a.out.as_deref(), std::str::from_utf8(&csv)?)?;
            if let Some(path) = &a.log {
                let mut lines = String::new();
                for run in &result.runs {
                    lines.push_str(&serde_json::to_string(run)?);
                    lines.push('\n');
                }
                fs::write(path, lines).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
