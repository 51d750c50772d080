//! Largest-eigenvalue estimation and the scale factors that bring solver inputs into the
//! convergence region of the iterative methods.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, product, BatchedTensor, Matrix};
use crate::random;

pub const DEFAULT_POOL: usize = 16;
pub const DEFAULT_PI_ITERS: usize = 30;

/// How a matrix is normalized before an iterative root solver sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingMode {
    /// Divide by `‖A‖_F`.
    Frobenius,
    /// Divide by `2 λ_PI` from multi-start power iteration.
    PowerIteration { pool: usize, iters: usize },
}

impl Default for ScalingMode {
    fn default() -> Self {
        ScalingMode::PowerIteration {
            pool: DEFAULT_POOL,
            iters: DEFAULT_PI_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEstimate {
    pub lambda: f64,
    /// Unit vector whose Rayleigh quotient is `lambda`.
    pub vector: Vec<f64>,
}

/// `xᵀAx / xᵀx`.
pub fn rayleigh_quotient(a: &Matrix, x: &[f64]) -> Result<f64> {
    if !a.is_square() || a.rows() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "rayleigh quotient of {:?} with a length-{} vector",
            a.shape(),
            x.len()
        )));
    }
    let xx: f64 = x.iter().map(|v| v * v).sum();
    if xx == 0.0 {
        return Err(Error::InvalidArgument("zero vector".into()));
    }
    let ax = a.dot_vec(x);
    Ok(x.iter().zip(&ax).map(|(a, b)| a * b).sum::<f64>() / xx)
}

fn normalize_columns(v: &mut Matrix) {
    let (n, k) = v.shape();
    for j in 0..k {
        let norm = (0..n).map(|i| v[(i, j)] * v[(i, j)]).sum::<f64>().sqrt();
        if norm > 0.0 {
            for i in 0..n {
                v[(i, j)] /= norm;
            }
        }
    }
}

/// Starting vectors for a pool: column `j` is the `j`-th draw of the seeded stream, so a
/// larger pool always contains the smaller pool's vectors.
fn starting_vectors(n: usize, pool: usize, seed: u64) -> Matrix {
    let mut rng = random::rng(seed);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(pool);
    for _ in 0..pool {
        cols.push((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    let mut v = Matrix::from_fn(n, pool, |i, j| cols[j][i]);
    normalize_columns(&mut v);
    v
}

fn run_pool(a: &Matrix, pool: usize, iters: usize, seed: u64) -> SpectralEstimate {
    let n = a.rows();
    let mut v = starting_vectors(n, pool, seed);
    for _ in 0..iters {
        v = product(a, &v);
        normalize_columns(&mut v);
    }
    let mut best: Option<(f64, usize)> = None;
    for j in 0..pool {
        let col = v.column(j);
        if col.iter().all(|&x| x == 0.0) {
            continue;
        }
        let rq = rayleigh_quotient(a, &col).expect("nonzero column");
        if best.is_none_or(|(b, _)| rq > b) {
            best = Some((rq, j));
        }
    }
    match best {
        Some((lambda, j)) => SpectralEstimate {
            lambda,
            vector: v.column(j),
        },
        None => SpectralEstimate {
            lambda: 0.0,
            vector: starting_vectors(n, 1, seed).column(0),
        },
    }
}

/// Power iteration on `pool` seeded vectors at once, keeping the one with the largest
/// Rayleigh quotient. The zero matrix yields `lambda = 0`.
pub fn multi_power_iteration(
    a: &Matrix,
    pool: usize,
    iters: usize,
    seed: u64,
) -> Result<SpectralEstimate> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if pool == 0 || iters == 0 {
        return Err(Error::InvalidArgument(
            "power iteration needs pool >= 1 and iters >= 1".into(),
        ));
    }
    if a.rows() == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if a.max_abs() == 0.0 {
        return Ok(run_pool(a, pool, iters, seed));
    }
    let est = run_pool(a, pool, iters, seed);
    if est.lambda > 0.0 {
        return Ok(est);
    }
    let retry = run_pool(a, pool, iters, seed ^ 0x9E37_79B9_7F4A_7C15);
    if retry.lambda > 0.0 {
        Ok(retry)
    } else {
        Err(Error::DegenerateSpectrum(
            "power iteration found no positive Rayleigh quotient".into(),
        ))
    }
}

/// Seed used for block `index` of a batch.
pub fn block_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// [`multi_power_iteration`] on every block, block `i` seeded with [`block_seed`].
pub fn batched_multi_power_iteration(
    a: &BatchedTensor,
    pool: usize,
    iters: usize,
    seed: u64,
) -> Vec<Result<SpectralEstimate>> {
    (0..a.batch())
        .into_par_iter()
        .map(|i| multi_power_iteration(&a.block(i), pool, iters, block_seed(seed, i)))
        .collect()
}

/// Divisor applied to `a` before an iterative solve: `‖a‖_F` or `2 λ_PI`.
pub fn scale_factor(a: &Matrix, mode: ScalingMode, seed: u64) -> Result<f64> {
    if a.max_abs() == 0.0 {
        return Err(Error::DegenerateSpectrum("cannot scale the zero matrix".into()));
    }
    match mode {
        ScalingMode::Frobenius => Ok(frobenius_norm(a)),
        ScalingMode::PowerIteration { pool, iters } => {
            let est = multi_power_iteration(a, pool, iters, seed)?;
            if est.lambda > 0.0 {
                Ok(2.0 * est.lambda)
            } else {
                Err(Error::DegenerateSpectrum(
                    "largest eigenvalue estimate is not positive".into(),
                ))
            }
        }
    }
}
