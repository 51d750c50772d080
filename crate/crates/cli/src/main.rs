//! `shampoo`: scalar convergence sweeps, single solves, toy training, batching benchmarks,
//! load-balance simulation and Chebyshev coefficient caching.
//!
//! Exit codes: 0 success, 1 usage, 2 numerical failure, 3 I/O.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use shampoo_core::balance::{greedy_balance, parse_layer_sizes, simulate_sync_cost, CostModel};
use shampoo_core::chebyshev::{cheb_fit, ChebCoefficients};
use shampoo_core::harness;
use shampoo_core::iterative::ScalarMethod;
use shampoo_core::shampoo::LrSchedule;
use shampoo_core::tasks::{Task, ToyTask};
use shampoo_core::{Error, Matrix};

use config::{RunConfig, Usage};

#[derive(Parser, Debug)]
#[command(name = "shampoo", version, about = "Inverse-root solvers and blocked Shampoo experiments")]
struct Cli {
    /// File of `key = value` lines; flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Iteration counts of the 1×1 CN and NDB iterations over a grid of x in (0, 1).
    ScalarSweep(SweepArgs),
    /// Inverse p-th root of one matrix file, checked against an eigendecomposition.
    Solve(SolveArgs),
    /// Train a toy task with blocked Shampoo; one CSV row per step.
    Train(TrainArgs),
    /// Time one stacked solver call against a loop over the same blocks.
    Bench(BenchArgs),
    /// Greedy layer-to-worker assignment.
    Balance(BalanceArgs),
    /// Fit Chebyshev coefficients of x^(-1/p) and write them to a cache file.
    ChebFit(ChebArgs),
}

#[derive(Args, Debug, Default)]
struct SolverFlags {
    /// evd, cn, ndb or cbshv
    #[arg(long)]
    method: Option<String>,
    /// Scaling before iterative solves: fro or pi
    #[arg(long)]
    norm: Option<String>,
    /// f64 or f32 (emulated by rounding after every multiply-add)
    #[arg(long)]
    precision: Option<String>,
    /// Root exponent, 2 or 4
    #[arg(long = "p")]
    p: Option<u32>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Run exactly this many iterations instead of stopping on --tol
    #[arg(long)]
    fixed_iters: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// EVD dampening: legacy, relu or abs
    #[arg(long)]
    dampening: Option<String>,
    #[arg(long)]
    cheb_degree: Option<usize>,
    #[arg(long)]
    cheb_points: Option<usize>,
    /// Chebyshev fit interval `a,b`
    #[arg(long)]
    cheb_interval: Option<String>,
    /// Coefficient file written by `cheb-fit`
    #[arg(long)]
    cheb_cache: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl SolverFlags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        let mut put = |k, x: Option<String>| {
            if let Some(x) = x {
                v.push((k, x));
            }
        };
        put("method", self.method.clone());
        put("norm", self.norm.clone());
        put("precision", self.precision.clone());
        put("p", self.p.map(|x| x.to_string()));
        put("tol", self.tol.map(|x| x.to_string()));
        put("max_iters", self.max_iters.map(|x| x.to_string()));
        put("fixed_iters", self.fixed_iters.map(|x| x.to_string()));
        put("epsilon", self.epsilon.map(|x| x.to_string()));
        put("dampening", self.dampening.clone());
        put("cheb_degree", self.cheb_degree.map(|x| x.to_string()));
        put("cheb_points", self.cheb_points.map(|x| x.to_string()));
        put("cheb_interval", self.cheb_interval.clone());
        put("cheb_cache", self.cheb_cache.as_ref().map(|p| p.display().to_string()));
        put("seed", self.seed.map(|x| x.to_string()));
        v
    }
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Methods to sweep, comma separated (cn, ndb); both by default
    #[arg(long, value_delimiter = ',')]
    method: Vec<String>,
    #[arg(long = "p")]
    p: Option<u32>,
    #[arg(long)]
    tol: Option<f64>,
    /// log (1e-6..1), linear (0.01..0.99) or both
    #[arg(long)]
    grid: Option<String>,
    /// Explicit x values, comma separated; replaces --grid
    #[arg(long, value_delimiter = ',')]
    x: Vec<f64>,
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Matrix text file: `rows cols` header, then one line per row
    matrix: PathBuf,
    #[command(flatten)]
    solver: SolverFlags,
    /// Write the computed root here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// quadratic, logistic or mlp
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    /// Constant rate or a schedule: constant:η, linear:η0:η1:n, cosine:η0:η1:n
    #[arg(long)]
    lr: Option<String>,
    /// Try a grid of constant rates first and train with the best one
    #[arg(long)]
    lr_sweep: bool,
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long)]
    update_freq: Option<usize>,
    #[arg(long)]
    beta_lr: Option<f64>,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Number of blocks
    #[arg(long)]
    batch: Option<usize>,
    /// Block dimension
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BalanceArgs {
    #[arg(long)]
    workers: usize,
    /// File of `id params` lines
    #[arg(long)]
    layers: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ChebArgs {
    #[arg(long = "p")]
    p: Option<u32>,
    #[arg(long)]
    cheb_degree: Option<usize>,
    #[arg(long)]
    cheb_points: Option<usize>,
    #[arg(long)]
    cheb_interval: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

fn resolve(config: Option<&Path>, flags: &[(&'static str, String)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = config {
        cfg.apply_file(path)?;
    }
    for (k, v) in flags {
        cfg.set(k, v).with_context(|| format!("--{}", k.replace('_', "-")))?;
    }
    if let Some(path) = cfg.cheb_cache.clone() {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading Chebyshev cache {}", path.display()))?;
        let coeffs = ChebCoefficients::parse_text(&text)
            .with_context(|| format!("parsing Chebyshev cache {}", path.display()))?;
        cfg.optimizer.solver.cheb = shampoo_core::solver::ChebSettings {
            degree: coeffs.degree,
            points: coeffs.points,
            interval: coeffs.interval,
            ..cfg.optimizer.solver.cheb
        };
        cfg.optimizer.solver.cheb_coeffs = Some(coeffs);
    }
    cfg.optimizer
        .validate()
        .map_err(|e| Usage(e.to_string()))?;
    eprint!("{}", cfg.echo());
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .context("writing to stdout"),
    }
}

fn opt<T: ToString>(k: &'static str, v: Option<T>) -> Option<(&'static str, String)> {
    v.map(|v| (k, v.to_string()))
}

fn scalar_sweep(config: Option<&Path>, a: SweepArgs) -> Result<()> {
    let flags: Vec<_> = [
        opt("p", a.p),
        opt("tol", a.tol),
        opt("grid", a.grid.clone()),
        opt("cap", a.cap),
    ]
    .into_iter()
    .flatten()
    .collect();
    let cfg = resolve(config, &flags)?;
    let methods = if a.method.is_empty() {
        vec![ScalarMethod::CoupledNewton, ScalarMethod::NewtonDb]
    } else {
        a.method
            .iter()
            .map(|m| match m.as_str() {
                "cn" => Ok(ScalarMethod::CoupledNewton),
                "ndb" => Ok(ScalarMethod::NewtonDb),
                other => Err(Usage(format!("scalar sweep supports cn and ndb, not `{other}`"))),
            })
            .collect::<std::result::Result<_, _>>()?
    };
    let xs = if !a.x.is_empty() {
        a.x.clone()
    } else {
        match cfg.grid.as_str() {
            "log" => harness::log_grid(),
            "linear" => harness::linear_grid(),
            _ => harness::default_grid(),
        }
    };
    let rows = harness::scalar_sweep(&methods, cfg.p, cfg.optimizer.solver.tolerance, &xs, cfg.cap)?;
    emit(a.out.as_deref(), &harness::sweep_csv(&rows))
}

fn solve(config: Option<&Path>, a: SolveArgs) -> Result<()> {
    let cfg = resolve(config, &a.solver.pairs())?;
    let text = std::fs::read_to_string(&a.matrix)
        .with_context(|| format!("reading {}", a.matrix.display()))?;
    let m = Matrix::parse_text(&text).with_context(|| format!("parsing {}", a.matrix.display()))?;
    let (root, rep) = harness::solve_report(&m, cfg.p, &cfg.optimizer.solver, cfg.optimizer.seed)?;
    let csv = format!(
        "iterations,converged,residual,matmuls,scale\n{},{},{:?},{},{:?}\n",
        rep.iterations, rep.converged, rep.residual, rep.matmuls, rep.scale
    );
    std::io::stdout().write_all(csv.as_bytes()).context("writing to stdout")?;
    if let Some(out) = a.out.as_deref() {
        std::fs::write(out, root.to_text()).with_context(|| format!("writing {}", out.display()))?;
    }
    if !rep.converged {
        bail!(Error::NoConvergence {
            method: "solve",
            iterations: rep.iterations,
        });
    }
    Ok(())
}

fn train(config: Option<&Path>, a: TrainArgs) -> Result<()> {
    let mut flags: Vec<_> = [
        opt("task", a.task.clone()),
        opt("steps", a.steps),
        opt("lr", a.lr.clone()),
        opt("block_size", a.block_size),
        opt("update_freq", a.update_freq),
        opt("beta_lr", a.beta_lr),
    ]
    .into_iter()
    .flatten()
    .collect();
    flags.extend(a.solver.pairs());
    let mut cfg = resolve(config, &flags)?;
    let task = ToyTask::by_name(&cfg.task, cfg.optimizer.seed).map_err(|e| Usage(e.to_string()))?;
    if a.lr_sweep {
        let trials = harness::lr_sweep(&task, &cfg.optimizer, cfg.steps, &harness::default_lr_candidates());
        eprint!("{}", harness::lr_sweep_csv(&trials));
        let Some(best) = harness::best_lr(&trials) else {
            bail!(Error::NonFinite("every learning rate in the sweep failed".into()));
        };
        eprintln!("lr = {}", LrSchedule::Constant(best.lr));
        cfg.optimizer.lr = LrSchedule::Constant(best.lr);
    }
    let rows = harness::train(&task, &cfg.optimizer, cfg.steps)?;
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        eprintln!(
            "{}: loss {:e} -> {:e} over {} steps",
            task.name(),
            first.loss,
            last.loss,
            rows.len()
        );
    }
    emit(a.out.as_deref(), &harness::train_csv(&rows))
}

fn bench(config: Option<&Path>, a: BenchArgs) -> Result<()> {
    let mut flags: Vec<_> = [opt("batch", a.batch), opt("dim", a.block_size), opt("repeats", a.repeats)]
        .into_iter()
        .flatten()
        .collect();
    flags.extend(a.solver.pairs());
    let cfg = resolve(config, &flags)?;
    let solver = &cfg.optimizer.solver;
    let r = harness::bench(cfg.batch, cfg.dim, cfg.p, solver, cfg.repeats, cfg.optimizer.seed)?;
    eprintln!(
        "stacked {:.3e}s, sequential {:.3e}s, max delta {:.1e}",
        r.stacked_median, r.sequential_median, r.max_delta
    );
    emit(a.out.as_deref(), &harness::bench_csv(&[r], solver.method.name()))
}

fn balance(config: Option<&Path>, a: BalanceArgs) -> Result<()> {
    resolve(config, &[])?;
    let text = std::fs::read_to_string(&a.layers)
        .with_context(|| format!("reading {}", a.layers.display()))?;
    let layers = parse_layer_sizes(&text).with_context(|| format!("parsing {}", a.layers.display()))?;
    let assignment = greedy_balance(&layers, a.workers).map_err(|e| Usage(e.to_string()))?;
    let params: std::collections::HashMap<usize, u64> = layers.iter().map(|l| (l.id, l.params)).collect();
    let mut csv = String::from("worker,layer_id,params\n");
    for (w, id) in assignment.rows() {
        csv.push_str(&format!("{w},{id},{}\n", params[&id]));
    }
    let rep = simulate_sync_cost(&assignment, &CostModel::default());
    eprintln!(
        "makespan {} params, broadcast volume {} params",
        rep.makespan, rep.broadcast_volume
    );
    emit(a.out.as_deref(), &csv)
}

fn cheb(config: Option<&Path>, a: ChebArgs) -> Result<()> {
    let flags: Vec<_> = [
        opt("p", a.p),
        opt("cheb_degree", a.cheb_degree),
        opt("cheb_points", a.cheb_points),
        opt("cheb_interval", a.cheb_interval.clone()),
    ]
    .into_iter()
    .flatten()
    .collect();
    let cfg = resolve(config, &flags)?;
    let c = &cfg.optimizer.solver.cheb;
    let coeffs = cheb_fit(cfg.p, c.degree, c.points, c.interval).map_err(|e| Usage(e.to_string()))?;
    emit(Some(&a.out), &coeffs.to_text())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if cause.is::<std::io::Error>() {
            return 3;
        }
        if let Some(core) = cause.downcast_ref::<Error>() {
            return match core {
                Error::Io(_) | Error::Parse { .. } => 3,
                e if e.is_numerical() => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let config = cli.config.as_deref();
    let result = match cli.command {
        Command::ScalarSweep(a) => scalar_sweep(config, a),
        Command::Solve(a) => solve(config, a),
        Command::Train(a) => train(config, a),
        Command::Bench(a) => bench(config, a),
        Command::Balance(a) => balance(config, a),
        Command::ChebFit(a) => cheb(config, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
