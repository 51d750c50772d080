//! Blocked Shampoo with Adam grafting.
//!
//! Each layer is cut into blocks ([`crate::blocking`]); every block keeps an EMA of `GGᵀ`
//! (left) and `GᵀG` (right). Blocks of equal shape live in one stacked tensor so a single
//! batched solver call refreshes all of their inverse roots. Roots are recomputed on steps
//! `t ≡ 0 (mod f)` (zero-based) and reused in between.
//!
//! 1-D layers keep only a left statistic and use its inverse square root.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::blocking::{member_index, plan_stack_groups, BlockLayout, GroupPlan, MemberKey, Side};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, gram_cols, gram_rows, product, BatchedTensor, Matrix};
use crate::solver::{batched_inverse_root, parse_num, RootMethod, SolverConfig};
use crate::spectral::block_seed;

/// Learning rate as a function of the zero-based step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant(f64),
    /// Straight line from `start` to `end` over `steps`, then held at `end`.
    Linear { start: f64, end: f64, steps: usize },
    /// Half cosine from `peak` down to `floor` over `steps`, then held at `floor`.
    Cosine { peak: f64, floor: f64, steps: usize },
}

impl LrSchedule {
    pub fn at(&self, t: usize) -> f64 {
        match *self {
            LrSchedule::Constant(lr) => lr,
            LrSchedule::Linear { start, end, steps } => {
                let frac = if steps == 0 { 1.0 } else { (t as f64 / steps as f64).min(1.0) };
                start + (end - start) * frac
            }
            LrSchedule::Cosine { peak, floor, steps } => {
                let frac = if steps == 0 { 1.0 } else { (t as f64 / steps as f64).min(1.0) };
                floor + 0.5 * (peak - floor) * (1.0 + (PI * frac).cos())
            }
        }
    }

    /// `0.1`, `constant:0.1`, `linear:0.1:0.0:200` or `cosine:0.1:0.0:200`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let f = |i: usize| parse_num::<f64>("lr", parts[i]);
        match parts.as_slice() {
            [_] => Ok(LrSchedule::Constant(f(0)?)),
            ["constant", _] => Ok(LrSchedule::Constant(f(1)?)),
            ["linear", _, _, n] => Ok(LrSchedule::Linear {
                start: f(1)?,
                end: f(2)?,
                steps: parse_num("lr", n)?,
            }),
            ["cosine", _, _, n] => Ok(LrSchedule::Cosine {
                peak: f(1)?,
                floor: f(2)?,
                steps: parse_num("lr", n)?,
            }),
            _ => Err(Error::InvalidArgument(format!(
                "lr = `{s}`: expected a number, constant:η, linear:η0:η1:steps or cosine:η0:η1:steps"
            ))),
        }
    }
}

impl std::fmt::Display for LrSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LrSchedule::Constant(lr) => write!(f, "constant:{lr:?}"),
            LrSchedule::Linear { start, end, steps } => write!(f, "linear:{start:?}:{end:?}:{steps}"),
            LrSchedule::Cosine { peak, floor, steps } => {
                write!(f, "cosine:{peak:?}:{floor:?}:{steps}")
            }
        }
    }
}

/// Adam direction whose norm the Shampoo step borrows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraftConfig {
    /// Momentum on the grafting numerator; 0 grafts raw gradients.
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for GraftConfig {
    fn default() -> Self {
        Self {
            beta1: 0.0,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShampooConfig {
    /// EMA decay of the preconditioner statistics.
    pub beta_lr: f64,
    /// Regularizer added to every statistic before the root; overrides `solver.epsilon`.
    pub epsilon: f64,
    pub lr: LrSchedule,
    pub update_freq: usize,
    pub solver: SolverConfig,
    pub block_size: usize,
    pub graft: GraftConfig,
    /// Seeds the power-iteration pools used for scaling.
    pub seed: u64,
}

impl Default for ShampooConfig {
    fn default() -> Self {
        Self {
            beta_lr: 0.95,
            epsilon: 1e-10,
            lr: LrSchedule::Constant(1e-3),
            update_freq: 1,
            solver: SolverConfig::default(),
            block_size: 1024,
            graft: GraftConfig::default(),
            seed: 0,
        }
    }
}

impl ShampooConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must lie in [0, 1), got {v}")))
            }
        };
        unit("beta_lr", self.beta_lr)?;
        unit("graft_beta1", self.graft.beta1)?;
        unit("graft_beta2", self.graft.beta2)?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.graft.eps > 0.0) {
            return Err(Error::InvalidArgument("graft_eps must be positive".into()));
        }
        if self.update_freq == 0 || self.block_size == 0 {
            return Err(Error::InvalidArgument(
                "update_freq and block_size must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Sets one option by key, including every [`SolverConfig`] key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let v = value.trim();
        match key {
            "beta_lr" => self.beta_lr = parse_num(key, v)?,
            "epsilon" => {
                self.epsilon = parse_num(key, v)?;
                self.solver.epsilon = self.epsilon;
            }
            "lr" => self.lr = LrSchedule::parse(v)?,
            "update_freq" => self.update_freq = parse_num(key, v)?,
            "block_size" => self.block_size = parse_num(key, v)?,
            "graft_beta1" => self.graft.beta1 = parse_num(key, v)?,
            "graft_beta2" => self.graft.beta2 = parse_num(key, v)?,
            "graft_eps" => self.graft.eps = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            _ => return self.solver.set(key, v),
        }
        Ok(true)
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("beta_lr", format!("{:?}", self.beta_lr)),
            ("epsilon", format!("{:?}", self.epsilon)),
            ("lr", self.lr.to_string()),
            ("update_freq", self.update_freq.to_string()),
            ("block_size", self.block_size.to_string()),
            ("graft_beta1", format!("{:?}", self.graft.beta1)),
            ("graft_beta2", format!("{:?}", self.graft.beta2)),
            ("graft_eps", format!("{:?}", self.graft.eps)),
            ("seed", self.seed.to_string()),
        ];
        out.extend(self.solver.pairs().into_iter().filter(|(k, _)| *k != "epsilon"));
        out
    }

    fn effective_solver(&self) -> SolverConfig {
        SolverConfig {
            epsilon: self.epsilon,
            ..self.solver.clone()
        }
    }
}

/// Shape of one trainable parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamShape {
    Matrix(usize, usize),
    Vector(usize),
}

impl ParamShape {
    pub fn dims(self) -> (usize, usize) {
        match self {
            ParamShape::Matrix(m, n) => (m, n),
            ParamShape::Vector(n) => (n, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LayerState {
    shape: ParamShape,
    layout: BlockLayout,
    /// Adam second moment, full layer shape.
    second_moment: Matrix,
    /// Grafting momentum, present when `beta1 > 0`.
    momentum: Option<Matrix>,
}

/// What one [`ShampooState::step`] did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Zero-based index of the step just taken.
    pub step: usize,
    pub lr: f64,
    pub refreshed: bool,
    /// `‖Δθ‖_F` over all layers.
    pub update_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShampooState {
    /// Zero-based index of the next step.
    pub step: usize,
    layers: Vec<LayerState>,
    plans: Vec<GroupPlan>,
    stats: Vec<BatchedTensor>,
    roots: Vec<BatchedTensor>,
    index: HashMap<MemberKey, (usize, usize)>,
}

fn block_matrix(t: &BatchedTensor, pos: usize) -> Matrix {
    t.block(pos)
}

impl ShampooState {
    /// Zero statistics and identity roots for the given parameter shapes; layer ids are
    /// positions in `shapes`.
    pub fn new(shapes: &[ParamShape], cfg: &ShampooConfig) -> Result<Self> {
        cfg.validate()?;
        let mut layers = Vec::with_capacity(shapes.len());
        for &shape in shapes {
            let layout = match shape {
                ParamShape::Matrix(m, n) => BlockLayout::new(m, n, cfg.block_size)?,
                ParamShape::Vector(n) => BlockLayout::for_vector(n, cfg.block_size)?,
            };
            let (m, n) = shape.dims();
            layers.push(LayerState {
                shape,
                layout,
                second_moment: Matrix::zeros(m, n),
                momentum: (cfg.graft.beta1 > 0.0).then(|| Matrix::zeros(m, n)),
            });
        }
        let ids: Vec<(usize, &BlockLayout)> =
            layers.iter().enumerate().map(|(i, l)| (i, &l.layout)).collect();
        let plans = plan_stack_groups(&ids);
        let stats = plans
            .iter()
            .map(|p| BatchedTensor::zeros(p.len(), p.dim))
            .collect();
        let roots = plans
            .iter()
            .map(|p| BatchedTensor::identity(p.len(), p.dim))
            .collect();
        let index = member_index(&plans);
        Ok(Self {
            step: 0,
            layers,
            plans,
            stats,
            roots,
            index,
        })
    }

    pub fn shapes(&self) -> Vec<ParamShape> {
        self.layers.iter().map(|l| l.shape).collect()
    }

    pub fn groups(&self) -> &[GroupPlan] {
        &self.plans
    }

    /// EMA statistic of one block.
    pub fn statistic(&self, key: MemberKey) -> Option<Matrix> {
        self.index.get(&key).map(|&(g, p)| block_matrix(&self.stats[g], p))
    }

    /// Cached inverse root of one block.
    pub fn inverse_root(&self, key: MemberKey) -> Option<Matrix> {
        self.index.get(&key).map(|&(g, p)| block_matrix(&self.roots[g], p))
    }

    pub fn root_tensors(&self) -> &[BatchedTensor] {
        &self.roots
    }

    fn check_grads(&self, grads: &[Matrix]) -> Result<()> {
        if grads.len() != self.layers.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} gradients for {} layers",
                grads.len(),
                self.layers.len()
            )));
        }
        for (i, (g, l)) in grads.iter().zip(&self.layers).enumerate() {
            if g.shape() != l.shape.dims() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {i}: gradient {:?}, parameter {:?}",
                    g.shape(),
                    l.shape.dims()
                )));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of layer {i}")));
            }
        }
        Ok(())
    }

    /// Folds one gradient per layer into the statistics and Adam moments.
    pub fn accumulate(&mut self, grads: &[Matrix], cfg: &ShampooConfig) -> Result<()> {
        self.check_grads(grads)?;
        let beta = cfg.beta_lr;
        let blocks: Vec<Vec<Matrix>> = grads
            .iter()
            .zip(&self.layers)
            .map(|(g, l)| {
                l.layout
                    .placements
                    .iter()
                    .map(|p| g.submatrix(p.row, p.col, p.rows, p.cols))
                    .collect()
            })
            .collect();
        let updates: Vec<Vec<Matrix>> = self
            .plans
            .par_iter()
            .map(|plan| {
                plan.members
                    .iter()
                    .map(|k| {
                        let g = &blocks[k.layer][k.block];
                        match k.side {
                            Side::Left => gram_rows(g),
                            Side::Right => gram_cols(g),
                        }
                    })
                    .collect()
            })
            .collect();
        for ((t, plan), outer) in self.stats.iter_mut().zip(&self.plans).zip(updates) {
            let n = plan.dim;
            for (blk, gg) in t.blocks_mut().zip(outer) {
                let gg = gg.data();
                for (v, u) in blk.iter_mut().zip(gg) {
                    *v = beta * *v + (1.0 - beta) * u;
                }
                for i in 0..n {
                    for j in i + 1..n {
                        let s = 0.5 * (blk[i * n + j] + blk[j * n + i]);
                        blk[i * n + j] = s;
                        blk[j * n + i] = s;
                    }
                }
            }
        }
        let (b1, b2) = (cfg.graft.beta1, cfg.graft.beta2);
        for (l, g) in self.layers.iter_mut().zip(grads) {
            l.second_moment = Matrix::from_fn(g.rows(), g.cols(), |i, j| {
                b2 * l.second_moment[(i, j)] + (1.0 - b2) * g[(i, j)] * g[(i, j)]
            });
            if let Some(m) = &mut l.momentum {
                *m = Matrix::from_fn(g.rows(), g.cols(), |i, j| {
                    b1 * m[(i, j)] + (1.0 - b1) * g[(i, j)]
                });
            }
        }
        Ok(())
    }

    /// Recomputes every cached root when the current step is a refresh step; returns whether
    /// it did. On failure the cache is left untouched.
    pub fn refresh_inverse_roots(&mut self, cfg: &ShampooConfig) -> Result<bool> {
        if self.step % cfg.update_freq != 0 {
            return Ok(false);
        }
        let solver = cfg.effective_solver();
        let mut fresh = Vec::with_capacity(self.plans.len());
        for (g, (plan, stats)) in self.plans.iter().zip(&self.stats).enumerate() {
            let mut s = solver.clone();
            if s.cheb_coeffs.as_ref().is_some_and(|c| c.p != plan.exponent) {
                s.cheb_coeffs = None;
            }
            let seed = block_seed(cfg.seed.wrapping_add(self.step as u64), g);
            let (mut out, status) = batched_inverse_root(stats, plan.exponent, &s, seed)?;
            for (pos, st) in status.into_iter().enumerate() {
                match st {
                    Ok(_) => {}
                    // an all-zero statistic under rank-truncating dampening: its pseudo-inverse
                    // root is zero, and so is every gradient that produced it
                    Err(Error::DegenerateSpectrum(_))
                        if s.method == RootMethod::Evd && stats.block_slice(pos).iter().all(|v| *v == 0.0) =>
                    {
                        out.set_block(pos, &Matrix::zeros(plan.dim, plan.dim));
                    }
                    Err(e) => {
                        let k = plan.members[pos];
                        return Err(Error::Block {
                            layer: k.layer,
                            side: k.side.letter(),
                            block: k.block,
                            source: Box::new(e),
                        });
                    }
                }
            }
            if !out.is_finite() {
                let k = plan.members[0];
                return Err(Error::Block {
                    layer: k.layer,
                    side: k.side.letter(),
                    block: k.block,
                    source: Box::new(Error::NonFinite("inverse root".into())),
                });
            }
            fresh.push(out);
        }
        self.roots = fresh;
        Ok(true)
    }

    /// Adam direction `P = M̂ / (eps + √Â)` (or `G` in place of `M̂`), bias corrected.
    fn graft_direction(&self, layer: usize, grad: &Matrix, cfg: &ShampooConfig) -> Matrix {
        let l = &self.layers[layer];
        let t = (self.step + 1) as i32;
        let c2 = 1.0 - cfg.graft.beta2.powi(t);
        let c1 = 1.0 - cfg.graft.beta1.powi(t);
        Matrix::from_fn(grad.rows(), grad.cols(), |i, j| {
            let num = match &l.momentum {
                Some(m) => m[(i, j)] / c1,
                None => grad[(i, j)],
            };
            num / (cfg.graft.eps + (l.second_moment[(i, j)] / c2).sqrt())
        })
    }

    /// Grafted update `η s U` per block, reassembled to the layer shape.
    fn layer_update(&self, layer: usize, grad: &Matrix, lr: f64, cfg: &ShampooConfig) -> Result<Matrix> {
        let l = &self.layers[layer];
        let p_full = self.graft_direction(layer, grad, cfg);
        let mut delta = Matrix::zeros(grad.rows(), grad.cols());
        for (b, pl) in l.layout.placements.iter().enumerate() {
            let g = grad.submatrix(pl.row, pl.col, pl.rows, pl.cols);
            let key = |side| MemberKey { layer, side, block: b };
            let left = self.inverse_root(key(Side::Left)).expect("left root exists");
            let mut u = product(&left, &g);
            if !l.layout.vector {
                let right = self.inverse_root(key(Side::Right)).expect("right root exists");
                u = product(&u, &right);
            }
            let p = p_full.submatrix(pl.row, pl.col, pl.rows, pl.cols);
            let s = graft_scale(&u, &p)?;
            delta.set_submatrix(pl.row, pl.col, &u.scale(lr * s));
        }
        Ok(delta)
    }

    /// One optimizer step: accumulate, refresh if due, apply grafted updates in place.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix], cfg: &ShampooConfig) -> Result<StepReport> {
        if params.len() != self.layers.len()
            || params.iter().zip(&self.layers).any(|(p, l)| p.shape() != l.shape.dims())
        {
            return Err(Error::DimensionMismatch(
                "parameters do not match the optimizer state".into(),
            ));
        }
        self.accumulate(grads, cfg)?;
        let refreshed = self.refresh_inverse_roots(cfg)?;
        let lr = cfg.lr.at(self.step);
        let deltas: Vec<Matrix> = (0..self.layers.len())
            .into_par_iter()
            .map(|i| self.layer_update(i, &grads[i], lr, cfg))
            .collect::<Result<_>>()?;
        let mut sq = 0.0;
        for (p, d) in params.iter_mut().zip(&deltas) {
            sq += frobenius_norm(d).powi(2);
            *p = p.sub(d)?;
        }
        let report = StepReport {
            step: self.step,
            lr,
            refreshed,
            update_norm: sq.sqrt(),
        };
        self.step += 1;
        Ok(report)
    }

    /// Serializes configuration and state. See the README for the layout.
    pub fn to_checkpoint(&self, cfg: &ShampooConfig) -> String {
        let mut out = String::from("# shampoo checkpoint v1\n");
        for (k, v) in cfg.pairs() {
            let _ = writeln!(out, "{k} = {v}");
        }
        let _ = writeln!(out, "step = {}", self.step);
        for (i, l) in self.layers.iter().enumerate() {
            match l.shape {
                ParamShape::Matrix(m, n) => {
                    let _ = writeln!(out, "[layer {i} matrix {m} {n}]");
                }
                ParamShape::Vector(n) => {
                    let _ = writeln!(out, "[layer {i} vector {n}]");
                }
            }
            let _ = writeln!(out, "[moment {i}]");
            out.push_str(&l.second_moment.to_text());
            if let Some(m) = &l.momentum {
                let _ = writeln!(out, "[momentum {i}]");
                out.push_str(&m.to_text());
            }
        }
        for (g, plan) in self.plans.iter().enumerate() {
            for (pos, k) in plan.members.iter().enumerate() {
                for (tag, t) in [("stat", &self.stats[g]), ("root", &self.roots[g])] {
                    let _ = writeln!(out, "[{tag} {} {} {}]", k.layer, k.side.letter(), k.block);
                    out.push_str(&t.block(pos).to_text());
                }
            }
        }
        out
    }

    /// Inverse of [`ShampooState::to_checkpoint`].
    pub fn from_checkpoint(text: &str) -> Result<(ShampooConfig, ShampooState)> {
        let perr = |line: usize, message: String| Error::Parse { line, message };
        let mut cfg = ShampooConfig::default();
        let mut step = None;
        let mut shapes: Vec<ParamShape> = Vec::new();
        // (header, first line number, body)
        let mut sections: Vec<(Vec<String>, usize, String)> = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(h) = line.strip_prefix('[') {
                let h = h
                    .strip_suffix(']')
                    .ok_or_else(|| perr(ln + 1, "unterminated section header".into()))?;
                sections.push((h.split_whitespace().map(String::from).collect(), ln + 1, String::new()));
            } else if let Some((_, _, body)) = sections.last_mut() {
                body.push_str(raw);
                body.push('\n');
            } else if line.is_empty() || line.starts_with('#') {
            } else if let Some((k, v)) = line.split_once('=') {
                let (k, v) = (k.trim(), v.trim());
                if k == "step" {
                    step = Some(parse_num::<usize>(k, v).map_err(|e| perr(ln + 1, e.to_string()))?);
                } else if !cfg.set(k, v).map_err(|e| perr(ln + 1, e.to_string()))? {
                    return Err(perr(ln + 1, format!("unknown key `{k}`")));
                }
            } else {
                return Err(perr(ln + 1, format!("unexpected line `{line}`")));
            }
        }
        for (h, ln, _) in &sections {
            if h.first().map(String::as_str) == Some("layer") {
                let nums: Vec<usize> = h
                    .iter()
                    .skip(1)
                    .filter(|t| *t != "matrix" && *t != "vector")
                    .map(|t| t.parse().map_err(|_| perr(*ln, format!("bad layer header {h:?}"))))
                    .collect::<Result<_>>()?;
                let shape = match (h.get(2).map(String::as_str), nums.as_slice()) {
                    (Some("matrix"), [id, m, n]) if *id == shapes.len() => ParamShape::Matrix(*m, *n),
                    (Some("vector"), [id, n]) if *id == shapes.len() => ParamShape::Vector(*n),
                    _ => return Err(perr(*ln, format!("bad layer header {h:?}"))),
                };
                shapes.push(shape);
            }
        }
        let mut state = ShampooState::new(&shapes, &cfg)?;
        state.step = step.ok_or_else(|| perr(1, "missing `step`".into()))?;
        let mut seen = 0usize;
        for (h, ln, body) in &sections {
            let kind = h[0].as_str();
            if kind == "layer" {
                continue;
            }
            let m = Matrix::parse_text(body).map_err(|e| match e {
                Error::Parse { line, message } => perr(ln + line, message),
                other => perr(*ln, other.to_string()),
            })?;
            let bad = || perr(*ln, format!("bad section header {h:?}"));
            match (kind, h.len()) {
                ("moment" | "momentum", 2) => {
                    let i: usize = h[1].parse().map_err(|_| bad())?;
                    let l = state.layers.get_mut(i).ok_or_else(bad)?;
                    if m.shape() != l.shape.dims() {
                        return Err(perr(*ln, "moment shape mismatch".into()));
                    }
                    if kind == "moment" {
                        l.second_moment = m;
                    } else {
                        l.momentum = Some(m);
                    }
                }
                ("stat" | "root", 4) => {
                    let side = match h[2].as_str() {
                        "L" => Side::Left,
                        "R" => Side::Right,
                        _ => return Err(bad()),
                    };
                    let key = MemberKey {
                        layer: h[1].parse().map_err(|_| bad())?,
                        side,
                        block: h[3].parse().map_err(|_| bad())?,
                    };
                    let &(g, pos) = state.index.get(&key).ok_or_else(bad)?;
                    if m.shape() != (state.plans[g].dim, state.plans[g].dim) {
                        return Err(perr(*ln, format!("block {key:?} has shape {:?}", m.shape())));
                    }
                    let t = if kind == "stat" { &mut state.stats[g] } else { &mut state.roots[g] };
                    t.set_block(pos, &m);
                    seen += 1;
                }
                _ => return Err(bad()),
            }
        }
        if seen != 2 * state.index.len() {
            return Err(perr(1, format!(
                "expected {} statistic/root sections, found {seen}",
                2 * state.index.len()
            )));
        }
        Ok((cfg, state))
    }
}

/// `‖P‖_F / ‖U‖_F`, or 0 when `U = 0`.
pub fn graft_scale(update: &Matrix, direction: &Matrix) -> Result<f64> {
    if update.shape() != direction.shape() {
        return Err(Error::DimensionMismatch(format!(
            "update {:?} vs grafting direction {:?}",
            update.shape(),
            direction.shape()
        )));
    }
    let u = frobenius_norm(update);
    if u == 0.0 {
        return Ok(0.0);
    }
    Ok(frobenius_norm(direction) / u)
}
