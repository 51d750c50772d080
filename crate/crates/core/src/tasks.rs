//! Small deterministic training problems with hand-written gradients.

use crate::error::{Error, Result};
use crate::linalg::{product, Matrix};
use crate::random::{gaussian_matrix, rng, spd, uniform_matrix};
use crate::shampoo::ParamShape;

pub trait Task {
    fn name(&self) -> &'static str;
    fn shapes(&self) -> Vec<ParamShape>;
    fn init(&self) -> Vec<Matrix>;
    fn loss_and_grad(&self, params: &[Matrix]) -> Result<(f64, Vec<Matrix>)>;

    fn loss(&self, params: &[Matrix]) -> Result<f64> {
        Ok(self.loss_and_grad(params)?.0)
    }
}

fn check_params(shapes: &[ParamShape], params: &[Matrix]) -> Result<()> {
    if shapes.len() != params.len()
        || shapes.iter().zip(params).any(|(s, p)| s.dims() != p.shape())
    {
        return Err(Error::DimensionMismatch(format!(
            "expected parameters {:?}, got {:?}",
            shapes.iter().map(|s| s.dims()).collect::<Vec<_>>(),
            params.iter().map(Matrix::shape).collect::<Vec<_>>()
        )));
    }
    Ok(())
}

/// `½ tr(θᵀ H θ)` with `H` symmetric positive definite.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub h: Matrix,
    pub start: Matrix,
}

impl Quadratic {
    /// `H` of size `dim` with the given condition number; `θ` is `dim × cols`.
    pub fn new(dim: usize, cols: usize, cond: f64, seed: u64) -> Self {
        let mut r = rng(seed);
        let h = spd(dim, cond, 1.0, &mut r);
        let start = uniform_matrix(dim, cols, &mut r);
        Self { h, start }
    }
}

impl Task for Quadratic {
    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn shapes(&self) -> Vec<ParamShape> {
        vec![ParamShape::Matrix(self.start.rows(), self.start.cols())]
    }

    fn init(&self) -> Vec<Matrix> {
        vec![self.start.clone()]
    }

    fn loss_and_grad(&self, params: &[Matrix]) -> Result<(f64, Vec<Matrix>)> {
        check_params(&self.shapes(), params)?;
        let theta = &params[0];
        let g = product(&self.h, theta);
        let loss = 0.5 * theta.data().iter().zip(g.data()).map(|(a, b)| a * b).sum::<f64>();
        Ok((loss, vec![g]))
    }
}

fn softmax_rows(z: &Matrix) -> Matrix {
    let mut out = z.clone();
    for i in 0..z.rows() {
        let m = z.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for j in 0..z.cols() {
            let e = (z[(i, j)] - m).exp();
            out[(i, j)] = e;
            s += e;
        }
        for j in 0..z.cols() {
            out[(i, j)] /= s;
        }
    }
    out
}

fn add_row_bias(z: &mut Matrix, b: &Matrix) {
    for i in 0..z.rows() {
        for j in 0..z.cols() {
            z[(i, j)] += b[(j, 0)];
        }
    }
}

fn column_sums(m: &Matrix) -> Matrix {
    Matrix::from_fn(m.cols(), 1, |j, _| (0..m.rows()).map(|i| m[(i, j)]).sum())
}

/// Multinomial logistic regression on Gaussian inputs labelled by a random linear teacher.
/// Parameters: weights `(features, classes)` and bias `(classes)`.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
    seed: u64,
}

impl LogisticRegression {
    pub fn new(samples: usize, features: usize, classes: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        let x = gaussian_matrix(samples, features, &mut r);
        let teacher = gaussian_matrix(features, classes, &mut r);
        let scores = product(&x, &teacher);
        let labels = (0..samples)
            .map(|i| {
                let row = scores.row(i);
                (0..classes)
                    .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                    .expect("at least one class")
            })
            .collect();
        Self {
            x,
            labels,
            classes,
            seed,
        }
    }
}

impl Task for LogisticRegression {
    fn name(&self) -> &'static str {
        "logistic"
    }

    fn shapes(&self) -> Vec<ParamShape> {
        vec![
            ParamShape::Matrix(self.x.cols(), self.classes),
            ParamShape::Vector(self.classes),
        ]
    }

    fn init(&self) -> Vec<Matrix> {
        let mut r = rng(self.seed.wrapping_add(1));
        vec![
            uniform_matrix(self.x.cols(), self.classes, &mut r).scale(0.1),
            Matrix::zeros(self.classes, 1),
        ]
    }

    fn loss_and_grad(&self, params: &[Matrix]) -> Result<(f64, Vec<Matrix>)> {
        check_params(&self.shapes(), params)?;
        let n = self.x.rows() as f64;
        let mut z = product(&self.x, &params[0]);
        add_row_bias(&mut z, &params[1]);
        let mut p = softmax_rows(&z);
        let mut loss = 0.0;
        for (i, &y) in self.labels.iter().enumerate() {
            loss -= p[(i, y)].max(f64::MIN_POSITIVE).ln();
            p[(i, y)] -= 1.0;
        }
        let dz = p.scale(1.0 / n);
        let gw = product(&self.x.transpose(), &dz);
        let gb = column_sums(&dz);
        Ok((loss / n, vec![gw, gb]))
    }
}

/// One tanh hidden layer regressing onto a random tanh teacher with squared loss.
/// Parameters: `W1 (in, hidden)`, `b1 (hidden)`, `W2 (hidden, out)`, `b2 (out)`.
#[derive(Debug, Clone)]
pub struct TinyMlp {
    pub x: Matrix,
    pub targets: Matrix,
    pub hidden: usize,
    seed: u64,
}

impl TinyMlp {
    pub fn new(samples: usize, widths: (usize, usize, usize), seed: u64) -> Self {
        let (input, hidden, output) = widths;
        let mut r = rng(seed);
        let x = gaussian_matrix(samples, input, &mut r);
        let t1 = gaussian_matrix(input, hidden, &mut r).scale(1.0 / (input as f64).sqrt());
        let t2 = gaussian_matrix(hidden, output, &mut r).scale(1.0 / (hidden as f64).sqrt());
        let targets = product(&product(&x, &t1).map(f64::tanh), &t2);
        Self {
            x,
            targets,
            hidden,
            seed,
        }
    }
}

impl Task for TinyMlp {
    fn name(&self) -> &'static str {
        "mlp"
    }

    fn shapes(&self) -> Vec<ParamShape> {
        let (i, h, o) = (self.x.cols(), self.hidden, self.targets.cols());
        vec![
            ParamShape::Matrix(i, h),
            ParamShape::Vector(h),
            ParamShape::Matrix(h, o),
            ParamShape::Vector(o),
        ]
    }

    fn init(&self) -> Vec<Matrix> {
        let mut r = rng(self.seed.wrapping_add(1));
        let (i, h, o) = (self.x.cols(), self.hidden, self.targets.cols());
        vec![
            gaussian_matrix(i, h, &mut r).scale(1.0 / (i as f64).sqrt()),
            Matrix::zeros(h, 1),
            gaussian_matrix(h, o, &mut r).scale(1.0 / (h as f64).sqrt()),
            Matrix::zeros(o, 1),
        ]
    }

    fn loss_and_grad(&self, params: &[Matrix]) -> Result<(f64, Vec<Matrix>)> {
        check_params(&self.shapes(), params)?;
        let n = self.x.rows() as f64;
        let mut z = product(&self.x, &params[0]);
        add_row_bias(&mut z, &params[1]);
        let a = z.map(f64::tanh);
        let mut y = product(&a, &params[2]);
        add_row_bias(&mut y, &params[3]);
        let resid = y.sub(&self.targets)?;
        let loss = 0.5 * resid.data().iter().map(|v| v * v).sum::<f64>() / n;
        let dy = resid.scale(1.0 / n);
        let gw2 = product(&a.transpose(), &dy);
        let gb2 = column_sums(&dy);
        let da = product(&dy, &params[2].transpose());
        let dz = Matrix::from_fn(a.rows(), a.cols(), |i, j| da[(i, j)] * (1.0 - a[(i, j)] * a[(i, j)]));
        let gw1 = product(&self.x.transpose(), &dz);
        let gb1 = column_sums(&dz);
        Ok((loss, vec![gw1, gb1, gw2, gb2]))
    }
}

/// The three tasks behind one type, for the harness.
#[derive(Debug, Clone)]
pub enum ToyTask {
    Quadratic(Quadratic),
    Logistic(LogisticRegression),
    Mlp(TinyMlp),
}

impl ToyTask {
    /// Default sizes: 32×32 quadratic with condition number 100, 256×16 inputs with 4
    /// classes, and a 8-32-2 network on 128 samples.
    pub fn by_name(name: &str, seed: u64) -> Result<Self> {
        match name {
            "quadratic" => Ok(ToyTask::Quadratic(Quadratic::new(32, 32, 100.0, seed))),
            "logistic" => Ok(ToyTask::Logistic(LogisticRegression::new(256, 16, 4, seed))),
            "mlp" => Ok(ToyTask::Mlp(TinyMlp::new(128, (8, 32, 2), seed))),
            other => Err(Error::InvalidArgument(format!(
                "unknown task `{other}` (expected quadratic, logistic or mlp)"
            ))),
        }
    }

    fn inner(&self) -> &dyn Task {
        match self {
            ToyTask::Quadratic(t) => t,
            ToyTask::Logistic(t) => t,
            ToyTask::Mlp(t) => t,
        }
    }
}

impl Task for ToyTask {
    fn name(&self) -> &'static str {
        self.inner().name()
    }

    fn shapes(&self) -> Vec<ParamShape> {
        self.inner().shapes()
    }

    fn init(&self) -> Vec<Matrix> {
        self.inner().init()
    }

    fn loss_and_grad(&self, params: &[Matrix]) -> Result<(f64, Vec<Matrix>)> {
        self.inner().loss_and_grad(params)
    }
}
