//! Dense matrices, stacked square blocks and the products every solver is built on.
//!
//! Storage is row-major and contiguous for both [`Matrix`] and [`BatchedTensor`]; block `i`
//! of a batch is the slice `data[i*B*B .. (i+1)*B*B]`, so batch entries never share memory.
//!
//! Every call to [`matmul`] or [`bmm`] bumps a thread-local counter (one tick per call, a
//! batched product counts once). Solvers are tested against their published matmul budgets
//! through [`matmul_count`].

use std::cell::Cell;
use std::fmt;
use std::ops::{Index, IndexMut};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Arithmetic precision used inside products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrecisionMode {
    #[default]
    Full64,
    /// Every multiply-accumulate result is rounded through `f32` storage.
    Emulated32,
}

impl PrecisionMode {
    #[inline]
    pub fn round(self, x: f64) -> f64 {
        match self {
            PrecisionMode::Full64 => x,
            PrecisionMode::Emulated32 => x as f32 as f64,
        }
    }
}

thread_local! {
    static MATMULS: Cell<u64> = const { Cell::new(0) };
}

/// Number of (batched) matrix products issued on this thread since the last reset.
pub fn matmul_count() -> u64 {
    MATMULS.with(|c| c.get())
}

pub fn reset_matmul_count() {
    MATMULS.with(|c| c.set(0));
}

fn tick() {
    MATMULS.with(|c| c.set(c.get() + 1));
}

/// Dense row-major real matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            writeln!(f, "  {:?}", &row[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "entry ({}, {}) is {}",
                pos / cols.max(1),
                pos % cols.max(1),
                data[pos]
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix without the finiteness check. Solver internals use this so that a
    /// blow-up surfaces through their residual checks instead of an allocation error.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_raw(rows, cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = s;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.data[r * self.cols + c]).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix::from_raw(self.rows, self.cols, self.data.iter().map(|v| v * s).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix::from_raw(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    fn zip(&self, other: &Matrix, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{op} of {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Matrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip(other, "sub", |a, b| a - b)
    }

    /// `self + s * I`.
    pub fn add_identity(&self, s: f64) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out.data[i * self.cols + i] += s;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |self - I|` entrywise.
    pub fn max_abs_dev_from_identity(&self) -> f64 {
        max_abs_dev_from_identity(&self.data, self.cols)
    }

    pub fn dot_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Copies the `rows x cols` window starting at `(r0, c0)`.
    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Matrix {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols);
        let mut data = Vec::with_capacity(rows * cols);
        for r in r0..r0 + rows {
            data.extend_from_slice(&self.data[r * self.cols + c0..r * self.cols + c0 + cols]);
        }
        Matrix::from_raw(rows, cols, data)
    }

    /// Writes `block` into the window starting at `(r0, c0)`.
    pub fn set_submatrix(&mut self, r0: usize, c0: usize, block: &Matrix) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for r in 0..block.rows {
            let dst = (r0 + r) * self.cols + c0;
            self.data[dst..dst + block.cols].copy_from_slice(block.row(r));
        }
    }

    /// Parses the text format: `rows cols` on the first line, then one line per row.
    pub fn parse_text(text: &str) -> Result<Matrix> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty input".into(),
        })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: hline + 1,
                message: format!("bad header: {e}"),
            })?;
        if dims.len() != 2 {
            return Err(Error::Parse {
                line: hline + 1,
                message: "header must be `rows cols`".into(),
            });
        }
        let (rows, cols) = (dims[0], dims[1]);
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let (ln, line) = lines.next().ok_or(Error::Parse {
                line: hline + 2 + r,
                message: format!("expected {rows} rows, found {r}"),
            })?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: ln + 1,
                    message: e.to_string(),
                })?;
            if vals.len() != cols {
                return Err(Error::Parse {
                    line: ln + 1,
                    message: format!("expected {cols} values, found {}", vals.len()),
                });
            }
            data.extend(vals);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(Error::Parse {
                line: ln + 1,
                message: "trailing data after last row".into(),
            });
        }
        Matrix::new(rows, cols, data).map_err(|e| Error::Parse {
            line: hline + 1,
            message: e.to_string(),
        })
    }

    /// Renders the text format with shortest round-trip decimal values.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.rows, self.cols);
        for r in 0..self.rows {
            let line: Vec<String> = self.row(r).iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

pub(crate) fn max_abs_dev_from_identity(data: &[f64], n: usize) -> f64 {
    let mut m: f64 = 0.0;
    for (idx, &v) in data.iter().enumerate() {
        let target = if idx / n == idx % n { 1.0 } else { 0.0 };
        let d = (v - target).abs();
        if d.is_nan() {
            return f64::NAN;
        }
        m = m.max(d);
    }
    m
}

/// `out = a * b` for row-major `a (m x k)` and `b (k x n)`; `out` must be zeroed.
///
/// In `Emulated32` every accumulation step is rounded to `f32`.
fn gemm(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize, mode: PrecisionMode) {
    match mode {
        PrecisionMode::Full64 => {
            for i in 0..m {
                let orow = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    let aip = a[i * k + p];
                    let brow = &b[p * n..(p + 1) * n];
                    for (o, &bv) in orow.iter_mut().zip(brow) {
                        *o += aip * bv;
                    }
                }
            }
        }
        PrecisionMode::Emulated32 => {
            for i in 0..m {
                let orow = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    let aip = a[i * k + p];
                    let brow = &b[p * n..(p + 1) * n];
                    for (o, &bv) in orow.iter_mut().zip(brow) {
                        *o = (*o + aip * bv) as f32 as f64;
                    }
                }
            }
        }
    }
}

/// Matrix product `a * b`.
pub fn matmul(a: &Matrix, b: &Matrix, mode: PrecisionMode) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch(format!(
            "matmul of {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    tick();
    let mut out = vec![0.0; a.rows * b.cols];
    gemm(&a.data, &b.data, &mut out, a.rows, a.cols, b.cols, mode);
    Ok(Matrix::from_raw(a.rows, b.cols, out))
}

/// `a * aᵀ` without counting toward the solver matmul budget.
pub fn gram_rows(a: &Matrix) -> Matrix {
    let mut out = vec![0.0; a.rows * a.rows];
    let at = a.transpose();
    gemm(&a.data, &at.data, &mut out, a.rows, a.cols, a.rows, PrecisionMode::Full64);
    Matrix::from_raw(a.rows, a.rows, out)
}

/// `aᵀ * a` without counting toward the solver matmul budget.
pub fn gram_cols(a: &Matrix) -> Matrix {
    gram_rows(&a.transpose())
}

/// Uncounted product for optimizer bookkeeping (preconditioned updates, reference checks).
pub fn product(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.rows, "product shape mismatch");
    let mut out = vec![0.0; a.rows * b.cols];
    gemm(&a.data, &b.data, &mut out, a.rows, a.cols, b.cols, PrecisionMode::Full64);
    Matrix::from_raw(a.rows, b.cols, out)
}

/// Frobenius norm `sqrt(sum a_ij^2)`.
pub fn frobenius_norm(a: &Matrix) -> f64 {
    a.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `(a + aᵀ) / 2`.
pub fn symmetrize(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let n = a.rows;
    Ok(Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)])))
}

/// `‖a − aᵀ‖_F / ‖a‖_F` (0 for the zero matrix).
pub fn relative_asymmetry(a: &Matrix) -> f64 {
    let n = a.rows;
    let mut num = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = a[(i, j)] - a[(j, i)];
            num += d * d;
        }
    }
    let den = frobenius_norm(a);
    if den == 0.0 {
        0.0
    } else {
        num.sqrt() / den
    }
}

/// A stack of `batch` square `dim x dim` blocks stored contiguously.
#[derive(Clone, PartialEq)]
pub struct BatchedTensor {
    batch: usize,
    dim: usize,
    data: Vec<f64>,
}

impl fmt::Debug for BatchedTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BatchedTensor({}, {}, {})", self.batch, self.dim, self.dim)
    }
}

impl BatchedTensor {
    pub fn new(batch: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != batch * dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} values supplied for a ({batch}, {dim}, {dim}) stack",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("batched tensor entry".into()));
        }
        Ok(Self { batch, dim, data })
    }

    pub(crate) fn from_raw(batch: usize, dim: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), batch * dim * dim);
        Self { batch, dim, data }
    }

    /// Stacks square blocks of identical shape. An empty slice needs the `dim` hint.
    pub fn stack(blocks: &[Matrix]) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Ok(Self::from_raw(0, 0, Vec::new()));
        };
        let dim = first.rows;
        let mut data = Vec::with_capacity(blocks.len() * dim * dim);
        for (i, b) in blocks.iter().enumerate() {
            if b.rows != dim || b.cols != dim {
                return Err(Error::DimensionMismatch(format!(
                    "block {i} has shape {:?}, expected ({dim}, {dim})",
                    b.shape()
                )));
            }
            data.extend_from_slice(&b.data);
        }
        Ok(Self::from_raw(blocks.len(), dim, data))
    }

    pub fn zeros(batch: usize, dim: usize) -> Self {
        Self::from_raw(batch, dim, vec![0.0; batch * dim * dim])
    }

    pub fn identity(batch: usize, dim: usize) -> Self {
        Self::scaled_identity(batch, dim, 1.0)
    }

    pub fn scaled_identity(batch: usize, dim: usize, s: f64) -> Self {
        let mut t = Self::zeros(batch, dim);
        for b in 0..batch {
            for i in 0..dim {
                t.data[b * dim * dim + i * dim + i] = s;
            }
        }
        t
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn block_len(&self) -> usize {
        self.dim * self.dim
    }

    pub fn block_slice(&self, i: usize) -> &[f64] {
        let l = self.block_len();
        &self.data[i * l..(i + 1) * l]
    }

    pub(crate) fn block_slice_mut(&mut self, i: usize) -> &mut [f64] {
        let l = self.block_len();
        &mut self.data[i * l..(i + 1) * l]
    }

    pub fn block(&self, i: usize) -> Matrix {
        Matrix::from_raw(self.dim, self.dim, self.block_slice(i).to_vec())
    }

    pub fn set_block(&mut self, i: usize, m: &Matrix) {
        assert_eq!(m.shape(), (self.dim, self.dim));
        self.block_slice_mut(i).copy_from_slice(m.data());
    }

    pub fn unstack(&self) -> Vec<Matrix> {
        (0..self.batch).map(|i| self.block(i)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn blocks_mut(&mut self) -> std::slice::ChunksMut<'_, f64> {
        let l = self.block_len().max(1);
        self.data.chunks_mut(l)
    }
}

/// Batched product: block `i` of the result is `a_i * b_i`.
pub fn bmm(a: &BatchedTensor, b: &BatchedTensor, mode: PrecisionMode) -> Result<BatchedTensor> {
    if a.batch != b.batch || a.dim != b.dim {
        return Err(Error::DimensionMismatch(format!(
            "bmm of ({}, {d}, {d}) and ({}, {e}, {e})",
            a.batch,
            b.batch,
            d = a.dim,
            e = b.dim
        )));
    }
    tick();
    let n = a.dim;
    let l = n * n;
    let mut out = vec![0.0; a.batch * l];
    if l > 0 {
        out.par_chunks_mut(l).enumerate().for_each(|(i, o)| {
            gemm(&a.data[i * l..(i + 1) * l], &b.data[i * l..(i + 1) * l], o, n, n, n, mode);
        });
    }
    Ok(BatchedTensor::from_raw(a.batch, n, out))
}
