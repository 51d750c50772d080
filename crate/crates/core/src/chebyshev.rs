//! Chebyshev approximation of `x^{-1/p}`: coefficient fitting, Clenshaw evaluation for
//! scalars and matrices, and a coefficient cache file.
//!
//! Coefficients are fitted on an interval `[a, b]` and carry it with them; evaluation maps
//! inputs from `[a, b]` onto `[-1, 1]`. For matrices the input is first divided by a scale
//! `s`, so the polynomial sees `S = (2A/s − (a + b) I) / (b − a)`. On the default interval
//! `[ε, 1 + ε]` this is `2A/s − I` shifted by `2ε`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{bmm, BatchedTensor, Matrix, PrecisionMode};

pub const DEFAULT_DEGREE: usize = 60;
pub const DEFAULT_POINTS: usize = 1000;
pub const DEFAULT_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ChebCoefficients {
    pub degree: usize,
    /// Number of sample points used by the fit.
    pub points: usize,
    pub interval: (f64, f64),
    /// Target exponent: the series approximates `x^{-1/p}`.
    pub p: u32,
    pub coeffs: Vec<f64>,
}

/// Default fit interval `[ε, 1 + ε]`.
pub fn default_interval() -> (f64, f64) {
    (DEFAULT_EPSILON, 1.0 + DEFAULT_EPSILON)
}

/// Chebyshev coefficients of `f` on `[a, b]` from `points` cosine-spaced samples.
///
/// `θ_v = (2v + 1)π / 2N`, `x_v = (b − a)/2 · cos θ_v + (b + a)/2`,
/// `c_k = (2/N) Σ_v f(x_v) cos(k θ_v)`, and `c_0` halved.
pub fn fit_coefficients(
    f: impl Fn(f64) -> f64,
    degree: usize,
    points: usize,
    interval: (f64, f64),
) -> Result<Vec<f64>> {
    let (a, b) = interval;
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid interval [{a}, {b}]")));
    }
    if points < degree + 1 {
        return Err(Error::InvalidArgument(format!(
            "{points} sample points cannot fit degree {degree}"
        )));
    }
    let theta: Vec<f64> = (0..points)
        .map(|v| (2 * v + 1) as f64 * PI / (2 * points) as f64)
        .collect();
    let fx: Vec<f64> = theta
        .iter()
        .map(|t| f(0.5 * (b - a) * t.cos() + 0.5 * (b + a)))
        .collect();
    let mut c: Vec<f64> = (0..=degree)
        .map(|k| {
            let s: f64 = fx
                .iter()
                .zip(&theta)
                .map(|(fv, t)| fv * (k as f64 * t).cos())
                .sum();
            2.0 / points as f64 * s
        })
        .collect();
    c[0] *= 0.5;
    Ok(c)
}

/// Fit for `x^{-1/p}`; requires `0 < a < b`.
pub fn cheb_fit(p: u32, degree: usize, points: usize, interval: (f64, f64)) -> Result<ChebCoefficients> {
    if p == 0 {
        return Err(Error::InvalidArgument("root exponent must be positive".into()));
    }
    if !(interval.0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "inverse-root fit needs a positive interval, got [{}, {}]",
            interval.0, interval.1
        )));
    }
    let inv_p = 1.0 / p as f64;
    let coeffs = fit_coefficients(|x| x.powf(-inv_p), degree, points, interval)?;
    Ok(ChebCoefficients {
        degree,
        points,
        interval,
        p,
        coeffs,
    })
}

/// Clenshaw recurrence on `t ∈ [-1, 1]`: `b_k = 2t b_{k+1} − b_{k+2} + c_k`, result
/// `b_0 − t b_1`.
pub fn clenshaw_series(t: f64, coeffs: &[f64]) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in coeffs.iter().rev() {
        let b0 = 2.0 * t * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    // b1 now holds b_0 and b2 holds b_1
    b1 - t * b2
}

impl ChebCoefficients {
    /// Maps `x ∈ [a, b]` to `[-1, 1]`.
    pub fn to_unit(&self, x: f64) -> f64 {
        let (a, b) = self.interval;
        (2.0 * x - (a + b)) / (b - a)
    }

    /// Cache file: header `d N a b p`, then `d + 1` coefficient lines.
    pub fn to_text(&self) -> String {
        let (a, b) = self.interval;
        let mut out = format!("{} {} {:?} {:?} {}\n", self.degree, self.points, a, b, self.p);
        for c in &self.coeffs {
            out.push_str(&format!("{c:?}\n"));
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad = |line: usize, message: String| Error::Parse { line, message };
        let (hl, header) = lines.next().ok_or(bad(1, "empty cache file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(bad(hl + 1, "header must be `d N a b p`".into()));
        }
        let degree: usize = fields[0].parse().map_err(|e| bad(hl + 1, format!("{e}")))?;
        let points: usize = fields[1].parse().map_err(|e| bad(hl + 1, format!("{e}")))?;
        let a: f64 = fields[2].parse().map_err(|e| bad(hl + 1, format!("{e}")))?;
        let b: f64 = fields[3].parse().map_err(|e| bad(hl + 1, format!("{e}")))?;
        let p: u32 = fields[4].parse().map_err(|e| bad(hl + 1, format!("{e}")))?;
        let mut coeffs = Vec::with_capacity(degree + 1);
        for (ln, line) in lines {
            let v: f64 = line.trim().parse().map_err(|e| bad(ln + 1, format!("{e}")))?;
            if !v.is_finite() {
                return Err(bad(ln + 1, "non-finite coefficient".into()));
            }
            coeffs.push(v);
        }
        if coeffs.len() != degree + 1 {
            return Err(bad(
                hl + 1,
                format!("expected {} coefficients, found {}", degree + 1, coeffs.len()),
            ));
        }
        if !(a < b) {
            return Err(bad(hl + 1, format!("invalid interval [{a}, {b}]")));
        }
        Ok(Self {
            degree,
            points,
            interval: (a, b),
            p,
            coeffs,
        })
    }
}

/// Evaluates the fitted series at `x` in the fit interval.
pub fn clenshaw_scalar(x: f64, c: &ChebCoefficients) -> f64 {
    clenshaw_series(c.to_unit(x), &c.coeffs)
}

/// `alpha * S + beta * B + gamma * I`, blockwise.
fn combine(
    sb: &BatchedTensor,
    alpha: f64,
    b: Option<&BatchedTensor>,
    beta: f64,
    gamma: f64,
) -> BatchedTensor {
    let n = sb.dim();
    let mut out: Vec<f64> = sb.data().iter().map(|v| alpha * v).collect();
    if let Some(b) = b {
        for (o, v) in out.iter_mut().zip(b.data()) {
            *o += beta * v;
        }
    }
    if gamma != 0.0 {
        for blk in 0..sb.batch() {
            for i in 0..n {
                out[blk * n * n + i * n + i] += gamma;
            }
        }
    }
    BatchedTensor::from_raw(sb.batch(), n, out)
}

/// Batched matrix Clenshaw. Block `i` is divided by `scales[i]`, mapped through the fit
/// interval, evaluated, and the result multiplied by `scales[i]^{-1/p}` so it approximates
/// `A_i^{-1/p}`.
///
/// The naive path follows the plain recurrence (`d + 2` products); the optimized path seeds
/// `B_d = c_d I`, `B_{d−1} = 2 c_d S + c_{d−1} I` and finishes with `S B_1 − B_2 + c_0 I`
/// (`d − 1` products).
pub fn batched_clenshaw_matrix(
    a: &BatchedTensor,
    c: &ChebCoefficients,
    scales: &[f64],
    mode: PrecisionMode,
    optimized: bool,
) -> Result<BatchedTensor> {
    if scales.len() != a.batch() {
        return Err(Error::DimensionMismatch(format!(
            "{} scales for {} blocks",
            scales.len(),
            a.batch()
        )));
    }
    if let Some(s) = scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {s}")));
    }
    if c.coeffs.is_empty() {
        return Err(Error::InvalidArgument("empty coefficient vector".into()));
    }
    let n = a.dim();
    let (lo, hi) = c.interval;
    let width = hi - lo;
    let mut s_data = Vec::with_capacity(a.data().len());
    for (blk, &scale) in scales.iter().enumerate() {
        for (idx, &v) in a.block_slice(blk).iter().enumerate() {
            let diag = if idx / n == idx % n { lo + hi } else { 0.0 };
            s_data.push((2.0 * v / scale - diag) / width);
        }
    }
    let s = BatchedTensor::from_raw(a.batch(), n, s_data);
    let coeffs = &c.coeffs;
    let d = coeffs.len() - 1;

    let poly = if optimized {
        match d {
            0 => BatchedTensor::scaled_identity(a.batch(), n, coeffs[0]),
            1 => combine(&s, coeffs[1], None, 0.0, coeffs[0]),
            _ => {
                let mut b2 = BatchedTensor::scaled_identity(a.batch(), n, coeffs[d]);
                let mut b1 = combine(&s, 2.0 * coeffs[d], None, 0.0, coeffs[d - 1]);
                for k in (1..=d - 2).rev() {
                    let sb = bmm(&s, &b1, mode)?;
                    let bk = combine(&sb, 2.0, Some(&b2), -1.0, coeffs[k]);
                    b2 = b1;
                    b1 = bk;
                }
                let sb = bmm(&s, &b1, mode)?;
                combine(&sb, 1.0, Some(&b2), -1.0, coeffs[0])
            }
        }
    } else {
        let mut b1 = BatchedTensor::zeros(a.batch(), n);
        let mut b2 = BatchedTensor::zeros(a.batch(), n);
        for k in (0..=d).rev() {
            let sb = bmm(&s, &b1, mode)?;
            let bk = combine(&sb, 2.0, Some(&b2), -1.0, coeffs[k]);
            b2 = b1;
            b1 = bk;
        }
        // b1 = B_0, b2 = B_1
        let sb = bmm(&s, &b2, mode)?;
        combine(&sb, -1.0, Some(&b1), 1.0, 0.0)
    };

    if !poly.is_finite() {
        return Err(Error::NonFinite(
            "Clenshaw evaluation overflowed; spectrum likely outside the fit interval".into(),
        ));
    }
    let inv_p = 1.0 / c.p as f64;
    let mut out = poly;
    for (blk, chunk) in out.blocks_mut().enumerate().take(a.batch()) {
        let f = scales[blk].powf(-inv_p);
        for v in chunk.iter_mut() {
            *v *= f;
        }
    }
    Ok(out)
}

/// Unbatched matrix Clenshaw; see [`batched_clenshaw_matrix`].
pub fn clenshaw_matrix(
    a: &Matrix,
    c: &ChebCoefficients,
    scale: f64,
    mode: PrecisionMode,
    optimized: bool,
) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let t = BatchedTensor::stack(std::slice::from_ref(a))?;
    Ok(batched_clenshaw_matrix(&t, c, &[scale], mode, optimized)?.block(0))
}
