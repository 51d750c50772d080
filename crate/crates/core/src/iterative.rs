//! Coupled-Newton and Newton–Denman–Beavers inverse-root iterations.
//!
//! Both iterations run on a [`BatchedTensor`] with one shared loop built from [`bmm`]. Each
//! block carries its own convergence state; once a block stops, its update factor is
//! replaced by the identity, which leaves it bit-for-bit unchanged for the remaining
//! iterations. The unbatched entry points are the `N = 1` case of the same loop.
//!
//! Stopping rules: CN stops when `max |M_k − I| ≤ tol`, NDB when `max |E_k − I| ≤ tol`.

use crate::error::{Error, Result};
use crate::linalg::{bmm, max_abs_dev_from_identity, BatchedTensor, Matrix, PrecisionMode};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 100;
/// A residual that rose on each of the last three iterations by more than this factor in
/// total is treated as divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationReport {
    pub iterations: usize,
    /// Stopping metric at exit.
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnConfig {
    pub p: u32,
    pub c: f64,
    pub tolerance: f64,
    pub max_iters: usize,
}

impl CnConfig {
    /// `c = (1 + p)^{-1/p}` so that `(p + 1) c^p = 1`.
    pub fn new(p: u32) -> Result<Self> {
        check_exponent(p)?;
        Ok(Self {
            p,
            c: (1.0 + p as f64).powf(-1.0 / p as f64),
            tolerance: DEFAULT_TOLERANCE,
            max_iters: DEFAULT_MAX_ITERS,
        })
    }

    pub fn with_tolerance(mut self, tolerance: f64, max_iters: usize) -> Self {
        self.tolerance = tolerance;
        self.max_iters = max_iters;
        self
    }

    /// Exactly `k` iterations, no early stop.
    pub fn fixed(mut self, k: usize) -> Self {
        self.tolerance = 0.0;
        self.max_iters = k;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NdbConfig {
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for NdbConfig {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

impl NdbConfig {
    pub fn fixed(k: usize) -> Self {
        Self {
            tolerance: 0.0,
            max_iters: k,
        }
    }
}

fn check_exponent(p: u32) -> Result<()> {
    if p == 2 || p == 4 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "root exponent must be 2 or 4, got {p}"
        )))
    }
}

#[derive(Debug, Clone)]
enum Status {
    Active,
    Done,
    Failed(Error),
}

/// Per-block convergence bookkeeping.
#[derive(Debug, Clone)]
struct Tracker {
    method: &'static str,
    status: Status,
    iterations: usize,
    history: Vec<f64>,
}

impl Tracker {
    fn new(method: &'static str) -> Self {
        Self {
            method,
            status: Status::Active,
            iterations: 0,
            history: Vec::new(),
        }
    }

    fn active(&self) -> bool {
        matches!(self.status, Status::Active)
    }

    fn residual(&self) -> f64 {
        self.history.last().copied().unwrap_or(f64::INFINITY)
    }

    fn observe(&mut self, residual: f64, tolerance: f64) {
        self.history.push(residual);
        if !residual.is_finite() {
            self.status = Status::Failed(Error::NonFinite(format!(
                "{} residual at iteration {}",
                self.method, self.iterations
            )));
            return;
        }
        if residual <= tolerance {
            self.status = Status::Done;
            return;
        }
        let h = &self.history;
        if h.len() >= 4 {
            let k = h.len() - 1;
            let rising = h[k] > h[k - 1] && h[k - 1] > h[k - 2] && h[k - 2] > h[k - 3];
            if rising && h[k] > DIVERGENCE_FACTOR * h[k - 3] {
                self.status = Status::Failed(Error::Diverged {
                    method: self.method,
                    iteration: self.iterations,
                    residual,
                });
            }
        }
    }

    fn fail(&mut self, e: Error) {
        self.status = Status::Failed(e);
    }

    fn finish(self) -> Result<IterationReport> {
        let residual = self.residual();
        match self.status {
            Status::Failed(e) => Err(e),
            Status::Done => Ok(IterationReport {
                iterations: self.iterations,
                residual,
                converged: true,
            }),
            Status::Active => Ok(IterationReport {
                iterations: self.iterations,
                residual,
                converged: false,
            }),
        }
    }
}

/// `alpha * I + beta * block` for active blocks and the identity for frozen ones.
fn affine_or_identity(
    src: &BatchedTensor,
    alpha: f64,
    beta: f64,
    trackers: &[Tracker],
    mode: PrecisionMode,
) -> BatchedTensor {
    let n = src.dim();
    let mut out = BatchedTensor::identity(src.batch(), n);
    for (i, block) in out.blocks_mut().enumerate().take(src.batch()) {
        if !trackers[i].active() {
            continue;
        }
        let s = src.block_slice(i);
        for (idx, (o, &v)) in block.iter_mut().zip(s).enumerate() {
            let diag = if idx / n == idx % n { alpha } else { 0.0 };
            *o = mode.round(diag + beta * v);
        }
    }
    out
}

fn residuals(t: &BatchedTensor) -> Vec<f64> {
    (0..t.batch())
        .map(|i| max_abs_dev_from_identity(t.block_slice(i), t.dim()))
        .collect()
}

/// Batched Coupled-Newton iteration for `A^{-1/p}`:
/// `X_0 = I/c`, `M_0 = A/c^p`, `C_k = (1 + 1/p) I − M_k / p`, `X ← X C`, `M ← C^p M`.
///
/// Costs 3 products per iteration for `p = 2` and 4 for `p = 4` (`C^4 = (C^2)^2`).
pub fn batched_coupled_newton(
    a: &BatchedTensor,
    cfg: &CnConfig,
    mode: PrecisionMode,
) -> (BatchedTensor, Vec<Result<IterationReport>>) {
    let batch = a.batch();
    let n = a.dim();
    let mut trackers = vec![Tracker::new("coupled-newton"); batch];
    if let Err(e) = check_exponent(cfg.p) {
        return (a.clone(), vec![Err(e); batch]);
    }
    let p = cfg.p as f64;
    let mut x = BatchedTensor::scaled_identity(batch, n, mode.round(1.0 / cfg.c));
    let inv_cp = 1.0 / cfg.c.powi(cfg.p as i32);
    let mut m = BatchedTensor::from_raw(
        batch,
        n,
        a.data().iter().map(|v| mode.round(v * inv_cp)).collect(),
    );

    let mut k = 0;
    loop {
        for (t, r) in trackers.iter_mut().zip(residuals(&m)) {
            if t.active() {
                t.observe(r, cfg.tolerance);
            }
        }
        if !trackers.iter().any(Tracker::active) {
            break;
        }
        if k == cfg.max_iters {
            break;
        }
        let c = affine_or_identity(&m, 1.0 + 1.0 / p, -1.0 / p, &trackers, mode);
        x = bmm(&x, &c, mode).expect("matching shapes");
        let mut cp = bmm(&c, &c, mode).expect("matching shapes");
        if cfg.p == 4 {
            cp = bmm(&cp, &cp, mode).expect("matching shapes");
        }
        m = bmm(&cp, &m, mode).expect("matching shapes");
        for t in trackers.iter_mut().filter(|t| t.active()) {
            t.iterations += 1;
        }
        k += 1;
    }
    (x, trackers.into_iter().map(Tracker::finish).collect())
}

/// Batched Newton–Denman–Beavers iteration returning `(A^{1/2}, A^{-1/2})`.
///
/// The first step uses the closed form `E_1 = (3I − A)/2`, `Y_1 = A E_1`, `Z_1 = E_1`
/// (one product); each later step computes `E = (3I − Z Y)/2`, `Y ← Y E`, `Z ← E Z`
/// (three products).
pub fn batched_newton_db(
    a: &BatchedTensor,
    cfg: &NdbConfig,
) -> (BatchedTensor, BatchedTensor, Vec<Result<IterationReport>>) {
    let mode = PrecisionMode::Full64;
    let batch = a.batch();
    let n = a.dim();
    let mut trackers = vec![Tracker::new("newton-denman-beavers"); batch];
    if batch == 0 {
        return (a.clone(), a.clone(), Vec::new());
    }

    let e1 = affine_or_identity(a, 1.5, -0.5, &trackers, mode);
    let mut y = bmm(a, &e1, mode).expect("matching shapes");
    let mut z = e1.clone();
    for (t, r) in trackers.iter_mut().zip(residuals(&e1)) {
        t.iterations = 1;
        t.observe(r, cfg.tolerance);
    }

    for _ in 1..cfg.max_iters {
        if !trackers.iter().any(Tracker::active) {
            break;
        }
        let zy = bmm(&z, &y, mode).expect("matching shapes");
        let e = affine_or_identity(&zy, 1.5, -0.5, &trackers, mode);
        let res = residuals(&e);
        y = bmm(&y, &e, mode).expect("matching shapes");
        z = bmm(&e, &z, mode).expect("matching shapes");
        for (t, r) in trackers.iter_mut().zip(res) {
            if t.active() {
                t.iterations += 1;
                t.observe(r, cfg.tolerance);
            }
        }
    }

    // A converged iterate with a non-positive diagonal is the wrong branch, reached only
    // when ‖I − A‖₂ < 1 was violated.
    for (i, t) in trackers.iter_mut().enumerate() {
        if matches!(t.status, Status::Done) {
            let yb = y.block_slice(i);
            if (0..n).any(|d| yb[d * n + d] <= 0.0) {
                let (iteration, residual) = (t.iterations, t.residual());
                t.fail(Error::Diverged {
                    method: "newton-denman-beavers",
                    iteration,
                    residual,
                });
            }
        }
    }
    (y, z, trackers.into_iter().map(Tracker::finish).collect())
}

/// `A^{-1/4}` as `(A^{1/2})^{-1/2}` via two batched NDB calls. Reports add iteration counts;
/// the residual is the second call's.
pub fn batched_ndb_inverse_fourth_root(
    a: &BatchedTensor,
    cfg: &NdbConfig,
) -> (BatchedTensor, Vec<Result<IterationReport>>) {
    let (sqrt, _, first) = batched_newton_db(a, cfg);
    let (_, inv, second) = batched_newton_db(&sqrt, cfg);
    let reports = first
        .into_iter()
        .zip(second)
        .map(|(r1, r2)| {
            let (r1, r2) = (r1?, r2?);
            Ok(IterationReport {
                iterations: r1.iterations + r2.iterations,
                residual: r2.residual,
                converged: r1.converged && r2.converged,
            })
        })
        .collect();
    (inv, reports)
}

fn single(a: &Matrix) -> Result<BatchedTensor> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    BatchedTensor::stack(std::slice::from_ref(a))
}

/// Unbatched Coupled-Newton; see [`batched_coupled_newton`].
pub fn coupled_newton(
    a: &Matrix,
    cfg: &CnConfig,
    mode: PrecisionMode,
) -> Result<(Matrix, IterationReport)> {
    check_exponent(cfg.p)?;
    let (x, mut reports) = batched_coupled_newton(&single(a)?, cfg, mode);
    let report = reports.pop().expect("one block")?;
    Ok((x.block(0), report))
}

/// Unbatched NDB returning `(A^{1/2}, A^{-1/2}, report)`.
pub fn newton_db(a: &Matrix, cfg: &NdbConfig) -> Result<(Matrix, Matrix, IterationReport)> {
    let (y, z, mut reports) = batched_newton_db(&single(a)?, cfg);
    let report = reports.pop().expect("one block")?;
    Ok((y.block(0), z.block(0), report))
}

pub fn ndb_inverse_fourth_root(a: &Matrix, cfg: &NdbConfig) -> Result<(Matrix, IterationReport)> {
    let (z, mut reports) = batched_ndb_inverse_fourth_root(&single(a)?, cfg);
    let report = reports.pop().expect("one block")?;
    Ok((z.block(0), report))
}

/// Iteration family used by the scalar convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarMethod {
    CoupledNewton,
    NewtonDb,
}

impl ScalarMethod {
    pub fn label(self) -> &'static str {
        match self {
            ScalarMethod::CoupledNewton => "CN",
            ScalarMethod::NewtonDb => "NDB",
        }
    }
}

/// Number of iterations the 1×1 instance of `method` needs before its inverse-root iterate
/// is within `tolerance` relative error of `x^{-1/p}`.
///
/// CN uses `c = (1 + p)^{-1/p}`. NDB with `p = 4` chains a square-root phase (stopped on
/// the same relative criterion against `√x`) and an inverse-square-root phase; the count is
/// the sum. On cap the report has `converged = false` and `iterations = cap`.
pub fn scalar_iteration_count(
    x: f64,
    method: ScalarMethod,
    p: u32,
    tolerance: f64,
    cap: usize,
) -> Result<IterationReport> {
    check_exponent(p)?;
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "scalar study needs x in (0, 1), got {x}"
        )));
    }
    Ok(match method {
        ScalarMethod::CoupledNewton => scalar_cn(x, p, tolerance, cap),
        ScalarMethod::NewtonDb if p == 2 => scalar_ndb(x, tolerance, cap, false).0,
        ScalarMethod::NewtonDb => {
            let (first, sqrt) = scalar_ndb(x, tolerance, cap, true);
            if !first.converged {
                return Ok(first);
            }
            let (second, _) = scalar_ndb(sqrt, tolerance, cap - first.iterations, false);
            IterationReport {
                iterations: first.iterations + second.iterations,
                residual: second.residual,
                converged: second.converged,
            }
        }
    })
}

fn scalar_cn(x: f64, p: u32, tolerance: f64, cap: usize) -> IterationReport {
    let pf = p as f64;
    let c = (1.0 + pf).powf(-1.0 / pf);
    let target = x.powf(-1.0 / pf);
    let mut xk = 1.0 / c;
    let mut mk = x / c.powi(p as i32);
    let mut err = f64::INFINITY;
    for k in 1..=cap {
        let ck = (1.0 + 1.0 / pf) - mk / pf;
        xk *= ck;
        mk *= ck.powi(p as i32);
        err = (xk - target).abs() / target;
        if err <= tolerance {
            return IterationReport {
                iterations: k,
                residual: err,
                converged: true,
            };
        }
    }
    IterationReport {
        iterations: cap,
        residual: err,
        converged: false,
    }
}

/// Returns the report and the final `Y` iterate. With `track_sqrt` the stopping rule
/// checks `Y` against `√x`, otherwise `Z` against `x^{-1/2}`.
fn scalar_ndb(x: f64, tolerance: f64, cap: usize, track_sqrt: bool) -> (IterationReport, f64) {
    let target = if track_sqrt { x.sqrt() } else { 1.0 / x.sqrt() };
    let mut e = 1.5 - 0.5 * x;
    let mut y = x * e;
    let mut z = e;
    let mut err = f64::INFINITY;
    for k in 1..=cap {
        if k > 1 {
            e = 0.5 * (3.0 - z * y);
            y *= e;
            z *= e;
        }
        let it = if track_sqrt { y } else { z };
        err = (it - target).abs() / target;
        if err <= tolerance {
            return (
                IterationReport {
                    iterations: k,
                    residual: err,
                    converged: true,
                },
                y,
            );
        }
    }
    (
        IterationReport {
            iterations: cap,
            residual: err,
            converged: false,
        },
        y,
    )
}
