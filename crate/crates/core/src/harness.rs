//! Experiment drivers behind the command-line tool. Every driver returns plain rows and has a
//! CSV renderer; none of them touch the filesystem.

use std::fmt::Write as _;
use std::time::Instant;

use crate::eigen::eigh;
use crate::error::{Error, Result};
use crate::iterative::{scalar_iteration_count, ScalarMethod};
use crate::linalg::{frobenius_norm, matmul_count, relative_asymmetry, reset_matmul_count, BatchedTensor, Matrix};
use crate::random::{rng, spd};
use crate::shampoo::{LrSchedule, ShampooConfig, ShampooState};
use crate::solver::{batched_inverse_root, inverse_root, SolverConfig};
use crate::spectral::block_seed;
use crate::tasks::Task;

/// `10^(-6 + i/10)` for `i = 0..60`.
pub fn log_grid() -> Vec<f64> {
    (0..60).map(|i| 10f64.powf((i as f64 - 60.0) / 10.0)).collect()
}

/// `0.01 i` for `i = 1..100`.
pub fn linear_grid() -> Vec<f64> {
    (1..100).map(|i| i as f64 / 100.0).collect()
}

/// Both grids merged in ascending order; points closer than one part in 10¹² collapse.
pub fn default_grid() -> Vec<f64> {
    let mut xs = log_grid();
    xs.extend(linear_grid());
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    xs
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub method: ScalarMethod,
    pub x: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn scalar_sweep(
    methods: &[ScalarMethod],
    p: u32,
    tolerance: f64,
    xs: &[f64],
    cap: usize,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(methods.len() * xs.len());
    for &method in methods {
        for &x in xs {
            let r = scalar_iteration_count(x, method, p, tolerance, cap)?;
            rows.push(SweepRow {
                method,
                x,
                iterations: r.iterations,
                converged: r.converged,
            });
        }
    }
    Ok(rows)
}

pub const SWEEP_HEADER: &str = "method,x,iterations,converged";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{:?},{},{}", r.method.label(), r.x, r.iterations, r.converged);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRow {
    pub step: usize,
    /// Loss before the update of this step.
    pub loss: f64,
    pub grad_norm: f64,
    pub update_norm: f64,
    pub refreshed: bool,
}

pub const TRAIN_HEADER: &str = "step,loss,grad_norm,update_norm,refresh_flag";

/// Runs `steps` Shampoo steps from the task's initial point.
pub fn train(task: &dyn Task, cfg: &ShampooConfig, steps: usize) -> Result<Vec<TrainRow>> {
    Ok(run(task, cfg, steps)?.0)
}

/// [`train`] plus the parameters after the last step.
pub fn run(task: &dyn Task, cfg: &ShampooConfig, steps: usize) -> Result<(Vec<TrainRow>, Vec<Matrix>)> {
    let mut params = task.init();
    let mut state = ShampooState::new(&task.shapes(), cfg)?;
    let mut rows = Vec::with_capacity(steps);
    for step in 0..steps {
        let (loss, grads) = task.loss_and_grad(&params)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss at step {step}")));
        }
        let grad_norm = grads.iter().map(|g| frobenius_norm(g).powi(2)).sum::<f64>().sqrt();
        let rep = state.step(&mut params, &grads, cfg)?;
        rows.push(TrainRow {
            step,
            loss,
            grad_norm,
            update_norm: rep.update_norm,
            refreshed: rep.refreshed,
        });
    }
    Ok((rows, params))
}

pub fn train_csv(rows: &[TrainRow]) -> String {
    let mut out = format!("{TRAIN_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?},{}",
            r.step, r.loss, r.grad_norm, r.update_norm, r.refreshed as u8
        );
    }
    out
}

/// Learning rates tried by [`lr_sweep`] unless the caller supplies its own.
pub fn default_lr_candidates() -> Vec<f64> {
    [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0].to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrTrial {
    pub lr: f64,
    /// Loss after the last step, or `None` when the run failed.
    pub final_loss: Option<f64>,
    /// Loss never rose after the first five steps.
    pub monotone: bool,
}

/// Steps exempt from the monotone-descent check at the start of a run.
pub const WARMUP_STEPS: usize = 5;

/// True when the loss never increases after the first [`WARMUP_STEPS`] steps.
pub fn descends_monotonically(rows: &[TrainRow]) -> bool {
    rows.windows(2)
        .skip(WARMUP_STEPS)
        .all(|w| w[1].loss <= w[0].loss)
}

/// Trains once per constant learning rate and reports the final loss of each run.
pub fn lr_sweep(task: &dyn Task, cfg: &ShampooConfig, steps: usize, candidates: &[f64]) -> Vec<LrTrial> {
    candidates
        .iter()
        .map(|&lr| {
            let c = ShampooConfig {
                lr: LrSchedule::Constant(lr),
                ..cfg.clone()
            };
            match run(task, &c, steps) {
                Ok((rows, params)) => {
                    let final_loss = task.loss(&params).ok().filter(|l| l.is_finite());
                    let monotone = final_loss.is_some_and(|l| {
                        descends_monotonically(&rows) && rows.last().is_none_or(|r| l <= r.loss)
                    });
                    LrTrial { lr, final_loss, monotone }
                }
                Err(_) => LrTrial {
                    lr,
                    final_loss: None,
                    monotone: false,
                },
            }
        })
        .collect()
}

/// Smallest final loss among monotone runs, or among all finished runs if none is monotone.
pub fn best_lr(trials: &[LrTrial]) -> Option<LrTrial> {
    let pick = |monotone_only: bool| {
        trials
            .iter()
            .filter(|t| t.final_loss.is_some() && (t.monotone || !monotone_only))
            .min_by(|a, b| a.final_loss.unwrap().total_cmp(&b.final_loss.unwrap()))
            .copied()
    };
    pick(true).or_else(|| pick(false))
}

pub fn lr_sweep_csv(trials: &[LrTrial]) -> String {
    let mut out = String::from("lr,final_loss,monotone\n");
    for t in trials {
        let loss = t.final_loss.map_or("nan".to_string(), |l| format!("{l:?}"));
        let _ = writeln!(out, "{:?},{loss},{}", t.lr, t.monotone);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub batch: usize,
    pub dim: usize,
    pub stacked_median: f64,
    pub sequential_median: f64,
    /// Largest Frobenius distance between stacked and per-block results.
    pub max_delta: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times one batched solver call against a loop of single-block calls on the same random
/// SPD blocks (condition number 100).
pub fn bench(
    batch: usize,
    dim: usize,
    p: u32,
    cfg: &SolverConfig,
    repeats: usize,
    seed: u64,
) -> Result<BenchReport> {
    if batch == 0 || dim == 0 || repeats == 0 {
        return Err(Error::InvalidArgument(
            "bench needs batch, dim and repeats of at least 1".into(),
        ));
    }
    let mut r = rng(seed);
    let blocks: Vec<Matrix> = (0..batch).map(|_| spd(dim, 100.0, 1.0, &mut r)).collect();
    let stacked = BatchedTensor::stack(&blocks)?;
    let mut st = Vec::with_capacity(repeats);
    let mut sq = Vec::with_capacity(repeats);
    let mut max_delta: f64 = 0.0;
    for _ in 0..repeats {
        let t0 = Instant::now();
        let (out, status) = batched_inverse_root(&stacked, p, cfg, seed)?;
        st.push(t0.elapsed().as_secs_f64());
        for s in status {
            s?;
        }
        let t0 = Instant::now();
        let seq: Vec<Matrix> = blocks
            .iter()
            .enumerate()
            .map(|(i, b)| inverse_root(b, p, cfg, block_seed(seed, i)).map(|(m, _)| m))
            .collect::<Result<_>>()?;
        sq.push(t0.elapsed().as_secs_f64());
        for (i, m) in seq.iter().enumerate() {
            max_delta = max_delta.max(frobenius_norm(&out.block(i).sub(m)?));
        }
    }
    Ok(BenchReport {
        batch,
        dim,
        stacked_median: median(st),
        sequential_median: median(sq),
        max_delta,
    })
}

pub const BENCH_HEADER: &str = "mode,batch,dim,method,median_seconds,max_delta";

pub fn bench_csv(reports: &[BenchReport], method: &str) -> String {
    let mut out = format!("{BENCH_HEADER}\n");
    for r in reports {
        for (mode, t) in [("stacked", r.stacked_median), ("sequential", r.sequential_median)] {
            let _ = writeln!(out, "{mode},{},{},{method},{t:?},{:?}", r.batch, r.dim, r.max_delta);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// Relative Frobenius distance to the eigendecomposition root of `A + εI`.
    pub residual: f64,
    pub matmuls: u64,
    pub scale: f64,
}

/// Rejects matrices whose relative asymmetry exceeds 1e-8.
pub fn check_symmetric(a: &Matrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let asym = relative_asymmetry(a);
    if asym > crate::eigen::SYMMETRY_TOLERANCE {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Solves once and compares against `Q diag((λ + ε)^{-1/p}) Qᵀ`.
pub fn solve_report(a: &Matrix, p: u32, cfg: &SolverConfig, seed: u64) -> Result<(Matrix, SolveReport)> {
    check_symmetric(a)?;
    reset_matmul_count();
    let (root, stats) = inverse_root(a, p, cfg, seed)?;
    let matmuls = matmul_count();
    let eps = cfg.epsilon;
    let inv_p = 1.0 / p as f64;
    let oracle = eigh(a)?.apply(|l| (l + eps).max(0.0).powf(-inv_p));
    let denom = frobenius_norm(&oracle);
    let residual = frobenius_norm(&root.sub(&oracle)?) / if denom > 0.0 { denom } else { 1.0 };
    Ok((
        root,
        SolveReport {
            iterations: stats.iterations,
            converged: stats.converged,
            residual,
            matmuls,
            scale: stats.scale,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::RootMethod;
    use crate::tasks::ToyTask;

    #[test]
    fn grids_have_documented_sizes() {
        assert_eq!(log_grid().len(), 60);
        assert!((log_grid()[0] - 1e-6).abs() < 1e-20);
        assert!((log_grid()[59] - 10f64.powf(-0.1)).abs() < 1e-15);
        assert_eq!(linear_grid().len(), 99);
        assert_eq!(linear_grid()[0], 0.01);
        let g = default_grid();
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(g.iter().all(|&x| x > 0.0 && x < 1.0));
        // 1e-2 and 1e-1 appear in both grids
        assert_eq!(g.len(), 60 + 99 - 2);
    }

    #[test]
    fn sweep_rows_and_csv() {
        let rows = scalar_sweep(&[ScalarMethod::CoupledNewton, ScalarMethod::NewtonDb], 2, 1e-10, &[0.01, 0.5], 100).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].iterations, 9);
        let csv = sweep_csv(&rows);
        assert!(csv.starts_with("method,x,iterations,converged\nCN,0.01,9,true\n"));
        assert!(scalar_sweep(&[ScalarMethod::NewtonDb], 2, 1e-10, &[1.5], 100).is_err());
    }

    #[test]
    fn train_zero_steps_is_header_only() {
        let task = ToyTask::by_name("quadratic", 0).unwrap();
        let rows = train(&task, &ShampooConfig::default(), 0).unwrap();
        assert_eq!(train_csv(&rows), format!("{TRAIN_HEADER}\n"));
    }

    #[test]
    fn train_is_deterministic() {
        let task = ToyTask::by_name("logistic", 1).unwrap();
        let cfg = ShampooConfig {
            lr: LrSchedule::Constant(0.01),
            update_freq: 3,
            ..ShampooConfig::default()
        };
        let a = train(&task, &cfg, 6).unwrap();
        let b = train(&task, &cfg, 6).unwrap();
        assert_eq!(a, b);
        let flags: Vec<bool> = a.iter().map(|r| r.refreshed).collect();
        assert_eq!(flags, vec![true, false, false, true, false, false]);
        assert!(a.last().unwrap().loss < a[0].loss);
    }

    #[test]
    fn lr_sweep_picks_a_finite_run() {
        let task = ToyTask::by_name("quadratic", 2).unwrap();
        let trials = lr_sweep(&task, &ShampooConfig::default(), 10, &[1e-3, 1e-2]);
        assert_eq!(trials.len(), 2);
        assert!(best_lr(&trials).is_some());
        assert!(lr_sweep_csv(&trials).starts_with("lr,final_loss,monotone\n"));
    }

    #[test]
    fn bench_results_agree() {
        let cfg = SolverConfig::with_method(RootMethod::CoupledNewton);
        let r = bench(4, 8, 2, &cfg, 2, 0).unwrap();
        assert!(r.max_delta < 1e-10);
        assert_eq!(bench_csv(&[r], "cn").lines().count(), 3);
    }

    #[test]
    fn solve_report_on_identity_and_spd() {
        let (root, rep) = solve_report(&Matrix::identity(4), 4, &SolverConfig::default(), 0).unwrap();
        assert!(rep.residual < 1e-12);
        assert!(root.max_abs_dev_from_identity() < 1e-9);
        assert!(rep.matmuls > 0);
        let a = spd(10, 100.0, 2.0, &mut rng(3));
        let (_, rep) = solve_report(&a, 2, &SolverConfig::default(), 0).unwrap();
        assert!(rep.residual < 1e-7);
        let mut bad = Matrix::identity(3);
        bad[(0, 1)] = 0.5;
        assert!(matches!(
            solve_report(&bad, 2, &SolverConfig::default(), 0),
            Err(Error::NotSymmetric { .. })
        ));
    }
}
