//! One entry point over the four inverse-root methods.
//!
//! Iterative methods (CN, NDB, Chebyshev) see `A + εI` divided by a per-block scale and the
//! result is scaled back by `s^{-1/p}`. EVD routes ε through its dampening heuristic instead.

use rayon::prelude::*;

use crate::chebyshev::{self, batched_clenshaw_matrix, cheb_fit};
use crate::eigen::{batched_evd_inverse_root, DampeningHeuristic, DampeningKind};
use crate::error::{Error, Result};
use crate::iterative::{
    batched_coupled_newton, batched_ndb_inverse_fourth_root, batched_newton_db, CnConfig,
    IterationReport, NdbConfig,
};
use crate::linalg::{BatchedTensor, Matrix, PrecisionMode};
use crate::spectral::{block_seed, scale_factor, ScalingMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RootMethod {
    Evd,
    CoupledNewton,
    #[default]
    NewtonDb,
    Chebyshev,
}

impl RootMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "evd" => Ok(RootMethod::Evd),
            "cn" => Ok(RootMethod::CoupledNewton),
            "ndb" => Ok(RootMethod::NewtonDb),
            "cbshv" => Ok(RootMethod::Chebyshev),
            other => Err(Error::InvalidArgument(format!(
                "unknown method `{other}` (expected evd, cn, ndb or cbshv)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RootMethod::Evd => "evd",
            RootMethod::CoupledNewton => "cn",
            RootMethod::NewtonDb => "ndb",
            RootMethod::Chebyshev => "cbshv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChebSettings {
    pub degree: usize,
    pub points: usize,
    pub interval: (f64, f64),
    pub optimized: bool,
}

impl Default for ChebSettings {
    fn default() -> Self {
        Self {
            degree: chebyshev::DEFAULT_DEGREE,
            points: chebyshev::DEFAULT_POINTS,
            interval: chebyshev::default_interval(),
            optimized: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: RootMethod,
    pub scaling: ScalingMode,
    pub tolerance: f64,
    pub max_iters: usize,
    /// Run exactly this many iterations instead of stopping on `tolerance`.
    pub fixed_iters: Option<usize>,
    pub precision: PrecisionMode,
    pub epsilon: f64,
    pub dampening: DampeningKind,
    pub cheb: ChebSettings,
    /// Pre-fitted coefficients; when absent they are fitted from `cheb` on demand.
    pub cheb_coeffs: Option<chebyshev::ChebCoefficients>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: RootMethod::default(),
            scaling: ScalingMode::default(),
            tolerance: crate::iterative::DEFAULT_TOLERANCE,
            max_iters: crate::iterative::DEFAULT_MAX_ITERS,
            fixed_iters: None,
            precision: PrecisionMode::Full64,
            epsilon: crate::eigen::DEFAULT_EPSILON,
            dampening: DampeningKind::default(),
            cheb: ChebSettings::default(),
            cheb_coeffs: None,
        }
    }
}

impl SolverConfig {
    pub fn with_method(method: RootMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    /// Sets one option by its config-file key. Returns `Ok(false)` for keys it does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let v = value.trim();
        match key {
            "method" => self.method = RootMethod::parse(v)?,
            "norm" => {
                self.scaling = match v {
                    "fro" => ScalingMode::Frobenius,
                    "pi" => match self.scaling {
                        ScalingMode::PowerIteration { .. } => self.scaling,
                        ScalingMode::Frobenius => ScalingMode::default(),
                    },
                    _ => return Err(bad(key, v, "fro or pi")),
                }
            }
            "pi_pool" | "pi_iters" => {
                let n: usize = parse_num(key, v)?;
                // ignored under Frobenius scaling, which has no pool
                if let ScalingMode::PowerIteration { pool, iters } = &mut self.scaling {
                    if key == "pi_pool" {
                        *pool = n;
                    } else {
                        *iters = n;
                    }
                }
            }
            "precision" => {
                self.precision = match v {
                    "f64" => PrecisionMode::Full64,
                    "f32" => PrecisionMode::Emulated32,
                    _ => return Err(bad(key, v, "f64 or f32")),
                }
            }
            "tol" => self.tolerance = parse_num(key, v)?,
            "max_iters" => self.max_iters = parse_num(key, v)?,
            "fixed_iters" => {
                self.fixed_iters = if v == "none" { None } else { Some(parse_num(key, v)?) }
            }
            "epsilon" => self.epsilon = parse_num(key, v)?,
            "dampening" => self.dampening = parse_dampening(v)?,
            "cheb_degree" => self.cheb.degree = parse_num(key, v)?,
            "cheb_points" => self.cheb.points = parse_num(key, v)?,
            "cheb_interval" => self.cheb.interval = parse_interval(v)?,
            "cheb_optimized" => self.cheb.optimized = parse_num(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Every option as `(key, value)`, in a form [`SolverConfig::set`] accepts.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let (norm, pool, iters) = match self.scaling {
            ScalingMode::Frobenius => ("fro", crate::spectral::DEFAULT_POOL, crate::spectral::DEFAULT_PI_ITERS),
            ScalingMode::PowerIteration { pool, iters } => ("pi", pool, iters),
        };
        vec![
            ("method", self.method.name().into()),
            ("norm", norm.into()),
            ("pi_pool", pool.to_string()),
            ("pi_iters", iters.to_string()),
            (
                "precision",
                match self.precision {
                    PrecisionMode::Full64 => "f64",
                    PrecisionMode::Emulated32 => "f32",
                }
                .into(),
            ),
            ("tol", format!("{:?}", self.tolerance)),
            ("max_iters", self.max_iters.to_string()),
            (
                "fixed_iters",
                self.fixed_iters.map_or("none".into(), |k| k.to_string()),
            ),
            ("epsilon", format!("{:?}", self.epsilon)),
            ("dampening", dampening_name(self.dampening).into()),
            ("cheb_degree", self.cheb.degree.to_string()),
            ("cheb_points", self.cheb.points.to_string()),
            (
                "cheb_interval",
                format!("{:?},{:?}", self.cheb.interval.0, self.cheb.interval.1),
            ),
            ("cheb_optimized", self.cheb.optimized.to_string()),
        ]
    }

    fn cn_config(&self, p: u32) -> Result<CnConfig> {
        let base = CnConfig::new(p)?;
        Ok(match self.fixed_iters {
            Some(k) => base.fixed(k),
            None => base.with_tolerance(self.tolerance, self.max_iters),
        })
    }

    fn ndb_config(&self) -> NdbConfig {
        match self.fixed_iters {
            Some(k) => NdbConfig::fixed(k),
            None => NdbConfig {
                tolerance: self.tolerance,
                max_iters: self.max_iters,
            },
        }
    }

    fn coefficients(&self, p: u32) -> Result<chebyshev::ChebCoefficients> {
        match &self.cheb_coeffs {
            Some(c) if c.p == p => Ok(c.clone()),
            Some(c) => Err(Error::InvalidArgument(format!(
                "cached Chebyshev coefficients target p = {}, solver asked for p = {p}",
                c.p
            ))),
            None => cheb_fit(p, self.cheb.degree, self.cheb.points, self.cheb.interval),
        }
    }
}

fn bad(key: &str, value: &str, expected: &str) -> Error {
    Error::InvalidArgument(format!("{key} = `{value}`: expected {expected}"))
}

/// Parses a config value, naming the key on failure.
pub fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e: T::Err| Error::InvalidArgument(format!("{key} = `{value}`: {e}")))
}

/// `a,b` with `a < b`.
pub fn parse_interval(value: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = value.split(',').collect();
    if parts.len() != 2 {
        return Err(bad("interval", value, "two numbers `a,b`"));
    }
    let a: f64 = parse_num("interval", parts[0])?;
    let b: f64 = parse_num("interval", parts[1])?;
    if !(a < b) {
        return Err(bad("interval", value, "a < b"));
    }
    Ok((a, b))
}

pub fn parse_dampening(value: &str) -> Result<DampeningKind> {
    match value {
        "legacy" => Ok(DampeningKind::DistributedShampooLegacy),
        "relu" => Ok(DampeningKind::CorrectedShiftedRelu),
        "abs" => Ok(DampeningKind::CorrectedAbs),
        _ => Err(bad("dampening", value, "legacy, relu or abs")),
    }
}

pub fn dampening_name(kind: DampeningKind) -> &'static str {
    match kind {
        DampeningKind::DistributedShampooLegacy => "legacy",
        DampeningKind::CorrectedShiftedRelu => "relu",
        DampeningKind::CorrectedAbs => "abs",
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Divisor applied before the solve (1 for EVD).
    pub scale: f64,
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

/// `(A_i + εI)^{-1/p}` for every block, with per-block outcomes. Fails as a whole only on
/// configuration errors.
pub fn batched_inverse_root(
    a: &BatchedTensor,
    p: u32,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<(BatchedTensor, Vec<Result<SolveStats>>)> {
    check_exponent(p)?;
    if cfg.method == RootMethod::NewtonDb && cfg.precision != PrecisionMode::Full64 {
        return Err(Error::InvalidArgument(
            "Newton-Denman-Beavers runs in 64-bit precision only".into(),
        ));
    }
    let n = a.dim();

    if cfg.method == RootMethod::Evd {
        let h = DampeningHeuristic::new(cfg.dampening, cfg.epsilon)?;
        let (out, status) = batched_evd_inverse_root(a, p, &h);
        let stats = status
            .into_iter()
            .map(|s| {
                s.map(|()| SolveStats {
                    iterations: 0,
                    residual: 0.0,
                    converged: true,
                    scale: 1.0,
                })
            })
            .collect();
        return Ok((out, stats));
    }

    let mut reg = BatchedTensor::from_raw(a.batch(), n, a.data().to_vec());
    for blk in reg.blocks_mut().take(a.batch()) {
        for i in 0..n {
            blk[i * n + i] += cfg.epsilon;
        }
    }
    let scale_results: Vec<Result<f64>> = (0..a.batch())
        .into_par_iter()
        .map(|i| scale_factor(&reg.block(i), cfg.scaling, block_seed(seed, i)))
        .collect();
    // Blocks whose scale failed are solved on the identity and reported as errors.
    let mut failed: Vec<Option<Error>> = vec![None; a.batch()];
    let mut scales = vec![1.0; a.batch()];
    for (i, r) in scale_results.into_iter().enumerate() {
        match r {
            Ok(s) => scales[i] = s,
            Err(e) => {
                failed[i] = Some(e);
                reg.set_block(i, &Matrix::identity(n));
            }
        }
    }

    let (mut out, reports): (BatchedTensor, Vec<Result<IterationReport>>) = match cfg.method {
        RootMethod::Chebyshev => {
            let coeffs = cfg.coefficients(p)?;
            let out = batched_clenshaw_matrix(&reg, &coeffs, &scales, cfg.precision, cfg.cheb.optimized);
            match out {
                Ok(t) => {
                    let reports = (0..a.batch())
                        .map(|_| {
                            Ok(IterationReport {
                                iterations: 0,
                                residual: 0.0,
                                converged: true,
                            })
                        })
                        .collect();
                    // the polynomial path already applies s^{-1/p}
                    return Ok((t, finish(reports, failed, &scales, cfg)));
                }
                Err(e) => {
                    let reports = (0..a.batch()).map(|_| Err(e.clone())).collect();
                    (BatchedTensor::zeros(a.batch(), n), reports)
                }
            }
        }
        RootMethod::CoupledNewton | RootMethod::NewtonDb => {
            let mut scaled = reg.clone();
            for (i, blk) in scaled.blocks_mut().take(a.batch()).enumerate() {
                let inv = 1.0 / scales[i];
                for v in blk.iter_mut() {
                    *v *= inv;
                }
            }
            if cfg.method == RootMethod::CoupledNewton {
                batched_coupled_newton(&scaled, &cfg.cn_config(p)?, cfg.precision)
            } else if p == 2 {
                let (_, z, r) = batched_newton_db(&scaled, &cfg.ndb_config());
                (z, r)
            } else {
                batched_ndb_inverse_fourth_root(&scaled, &cfg.ndb_config())
            }
        }
        RootMethod::Evd => unreachable!("handled above"),
    };

    let inv_p = 1.0 / p as f64;
    for (i, blk) in out.blocks_mut().take(a.batch()).enumerate() {
        let f = scales[i].powf(-inv_p);
        for v in blk.iter_mut() {
            *v *= f;
        }
    }
    Ok((out, finish(reports, failed, &scales, cfg)))
}

fn finish(
    reports: Vec<Result<IterationReport>>,
    failed: Vec<Option<Error>>,
    scales: &[f64],
    cfg: &SolverConfig,
) -> Vec<Result<SolveStats>> {
    reports
        .into_iter()
        .zip(failed)
        .zip(scales)
        .map(|((r, f), &scale)| {
            if let Some(e) = f {
                return Err(e);
            }
            let r = r?;
            Ok(SolveStats {
                iterations: r.iterations,
                residual: r.residual,
                // a fixed iteration budget has nothing to converge to
                converged: r.converged || cfg.fixed_iters.is_some(),
                scale,
            })
        })
        .collect()
}

/// Unbatched form of [`batched_inverse_root`].
pub fn inverse_root(a: &Matrix, p: u32, cfg: &SolverConfig, seed: u64) -> Result<(Matrix, SolveStats)> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let t = BatchedTensor::stack(std::slice::from_ref(a))?;
    let (out, mut stats) = batched_inverse_root(&t, p, cfg, seed)?;
    let s = stats.pop().expect("one block")?;
    Ok((out.block(0), s))
}
