//! Symmetric eigendecomposition by cyclic Jacobi rotations, the EVD inverse-root path and
//! the spectrum dampening rules applied before eigenvalues are inverted.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, product, relative_asymmetry, BatchedTensor, Matrix};

/// Relative asymmetry accepted by [`eigh`] before rejecting the input.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;
/// Jacobi sweep cap.
pub const MAX_SWEEPS: usize = 100;
/// Stop once the off-diagonal Frobenius mass drops below this fraction of `‖A‖_F`.
pub const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;
/// Default regularizer.
pub const DEFAULT_EPSILON: f64 = 1e-10;

/// `A = Q diag(eigenvalues) Qᵀ`, eigenvalues ascending, column `i` of `Q` paired with
/// eigenvalue `i`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl EigenDecomposition {
    /// `Q diag(f(λ)) Qᵀ`, symmetrized.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let weights: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        self.compose(&weights)
    }

    /// `Q diag(weights) Qᵀ`, symmetrized.
    pub fn compose(&self, weights: &[f64]) -> Matrix {
        let q = &self.eigenvectors;
        let n = q.rows();
        let qw = Matrix::from_fn(n, n, |i, j| q[(i, j)] * weights[j]);
        let m = product(&qw, &q.transpose());
        Matrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
    }

    pub fn reconstruct(&self) -> Matrix {
        self.compose(&self.eigenvalues)
    }
}

/// Eigendecomposition of a symmetric matrix.
pub fn eigh(a: &Matrix) -> Result<EigenDecomposition> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let asym = relative_asymmetry(a);
    if asym > SYMMETRY_TOLERANCE {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("eigh input".into()));
    }
    let n = a.rows();
    let mut m = Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let mut v = Matrix::identity(n);
    let stop = OFF_DIAGONAL_TOLERANCE * frobenius_norm(&m);

    let mut converged = false;
    for _ in 0..=MAX_SWEEPS {
        if off_diagonal_norm(&m) <= stop {
            converged = true;
            break;
        }
        sweep(&mut m, &mut v);
    }
    if !converged {
        return Err(Error::NoConvergence {
            method: "jacobi eigh",
            iterations: MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let eigenvalues = order.iter().map(|&i| m[(i, i)]).collect();
    let eigenvectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

fn sweep(m: &mut Matrix, v: &mut Matrix) {
    let n = m.rows();
    for p in 0..n {
        for q in p + 1..n {
            let apq = m[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
            let t = if theta.abs() > 1e150 {
                0.5 / theta
            } else {
                theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
            };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..n {
                let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                m[(k, p)] = c * mkp - s * mkq;
                m[(k, q)] = s * mkp + c * mkq;
            }
            for k in 0..n {
                let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                m[(p, k)] = c * mpk - s * mqk;
                m[(q, k)] = s * mpk + c * mqk;
            }
            m[(p, q)] = 0.0;
            m[(q, p)] = 0.0;
            for k in 0..n {
                let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                v[(k, p)] = c * vkp - s * vkq;
                v[(k, q)] = s * vkp + c * vkq;
            }
        }
    }
}

/// How the spectrum of `A + εI` is turned into the eigenvalues that get inverted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DampeningKind {
    /// `λ − min(λ_min, 0) + ε` applied to the already-regularized spectrum, which adds ε
    /// twice when `λ_min ≥ 0`.
    DistributedShampooLegacy,
    /// Corrected spectrum `λ − ε`, then `ReLU(λ − ε)`; zeros are dropped from the inverse.
    #[default]
    CorrectedShiftedRelu,
    /// Corrected spectrum `λ − ε`, then `|λ| + ε`.
    CorrectedAbs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampeningHeuristic {
    pub kind: DampeningKind,
    pub epsilon: f64,
}

impl Default for DampeningHeuristic {
    fn default() -> Self {
        Self {
            kind: DampeningKind::default(),
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl DampeningHeuristic {
    pub fn new(kind: DampeningKind, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dampening epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self { kind, epsilon })
    }

    /// Processes the eigenvalues of `A + εI` (as returned by [`eigh`]).
    pub fn process_regularized(&self, regularized: &[f64]) -> Vec<f64> {
        let eps = self.epsilon;
        match self.kind {
            DampeningKind::DistributedShampooLegacy => {
                let lmin = regularized.iter().copied().fold(f64::INFINITY, f64::min);
                let shift = lmin.min(0.0);
                regularized.iter().map(|&l| l - shift + eps).collect()
            }
            _ => {
                let corrected: Vec<f64> = regularized.iter().map(|&l| l - eps).collect();
                self.process_corrected(&corrected)
            }
        }
    }

    /// Processes an already corrected spectrum (`λ(A + εI) − ε`). The legacy rule has no
    /// corrected form; for it this re-adds ε and applies the legacy shift.
    pub fn process_corrected(&self, corrected: &[f64]) -> Vec<f64> {
        let eps = self.epsilon;
        match self.kind {
            DampeningKind::CorrectedShiftedRelu => {
                corrected.iter().map(|&l| (l - eps).max(0.0)).collect()
            }
            DampeningKind::CorrectedAbs => corrected.iter().map(|&l| l.abs() + eps).collect(),
            DampeningKind::DistributedShampooLegacy => {
                let regularized: Vec<f64> = corrected.iter().map(|&l| l + eps).collect();
                self.process_regularized(&regularized)
            }
        }
    }
}

/// Number of strictly positive processed eigenvalues (the rank of the resulting inverse).
pub fn effective_rank(processed: &[f64]) -> usize {
    processed.iter().filter(|&&l| l > 0.0).count()
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

/// `Q diag(λ̂^{-1/p}) Qᵀ` where `λ̂` is the dampened spectrum of `A + εI`; entries with
/// `λ̂ = 0` contribute nothing.
pub fn evd_inverse_root(a: &Matrix, p: u32, heuristic: &DampeningHeuristic) -> Result<Matrix> {
    check_exponent(p)?;
    let eig = eigh(&a.add_identity(heuristic.epsilon))?;
    let processed = heuristic.process_regularized(&eig.eigenvalues);
    if effective_rank(&processed) == 0 {
        return Err(Error::DegenerateSpectrum(
            "every eigenvalue was zeroed by dampening".into(),
        ));
    }
    let inv_p = 1.0 / p as f64;
    let weights: Vec<f64> = processed
        .iter()
        .map(|&l| if l > 0.0 { l.powf(-inv_p) } else { 0.0 })
        .collect();
    Ok(eig.compose(&weights))
}

/// Per-block [`evd_inverse_root`]; block failures are reported individually.
pub fn batched_evd_inverse_root(
    a: &BatchedTensor,
    p: u32,
    heuristic: &DampeningHeuristic,
) -> (BatchedTensor, Vec<Result<()>>) {
    let results: Vec<Result<Matrix>> = (0..a.batch())
        .into_par_iter()
        .map(|i| evd_inverse_root(&a.block(i), p, heuristic))
        .collect();
    let mut out = BatchedTensor::zeros(a.batch(), a.dim());
    let mut status = Vec::with_capacity(a.batch());
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(m) => {
                out.set_block(i, &m);
                status.push(Ok(()));
            }
            Err(e) => status.push(Err(e)),
        }
    }
    (out, status)
}
