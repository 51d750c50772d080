//! Seeded generators for test matrices and synthetic data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{product, Matrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in `[-1, 1)`.
pub fn uniform_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Entries drawn from a standard normal (Box–Muller).
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| standard_normal(rng))
}

pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random orthogonal matrix from Gram–Schmidt on a Gaussian matrix.
pub fn orthogonal(n: usize, rng: &mut impl Rng) -> Matrix {
    let g = gaussian_matrix(n, n, rng);
    let mut q = Matrix::zeros(n, n);
    for j in 0..n {
        let mut v = g.column(j);
        // two passes keep the columns orthogonal to working precision
        for _ in 0..2 {
            for k in 0..j {
                let qk = q.column(k);
                let d: f64 = v.iter().zip(&qk).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(&qk) {
                    *vi -= d * qi;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (i, vi) in v.iter().enumerate() {
            q[(i, j)] = vi / norm;
        }
    }
    q
}

/// `Q diag(eigs) Qᵀ` for a random orthogonal `Q`, symmetrized exactly.
pub fn spd_with_spectrum(eigs: &[f64], rng: &mut impl Rng) -> Matrix {
    let n = eigs.len();
    let q = orthogonal(n, rng);
    let qd = Matrix::from_fn(n, n, |i, j| q[(i, j)] * eigs[j]);
    let a = product(&qd, &q.transpose());
    Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

/// Log-uniform spectrum in `[lambda_max / cond, lambda_max]` with both endpoints present.
pub fn log_spectrum(n: usize, cond: f64, lambda_max: f64, rng: &mut impl Rng) -> Vec<f64> {
    let lo = lambda_max / cond;
    (0..n)
        .map(|i| match i {
            0 => lambda_max,
            1 => lo,
            _ => lo * cond.powf(rng.gen::<f64>()),
        })
        .collect()
}

/// Random SPD matrix with condition number `cond` and top eigenvalue `lambda_max`.
pub fn spd(n: usize, cond: f64, lambda_max: f64, rng: &mut impl Rng) -> Matrix {
    let eigs = if n == 1 {
        vec![lambda_max]
    } else {
        log_spectrum(n, cond, lambda_max, rng)
    };
    spd_with_spectrum(&eigs, rng)
}
