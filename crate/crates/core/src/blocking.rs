//! Splitting layer gradients into `B×B` blocks and grouping same-shaped preconditioner blocks
//! into stacked batches.
//!
//! Block order is row-major over the block grid, with every full `B×B` block listed before the
//! ragged edge blocks (which are again row-major among themselves). Group membership is ordered
//! by `(layer, side, block)` with `Left < Right`.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::linalg::{gram_cols, gram_rows, BatchedTensor, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn letter(self) -> char {
        match self {
            Side::Left => 'L',
            Side::Right => 'R',
        }
    }
}

/// Where one block sits in its layer: rows `row..row + rows`, columns `col..col + cols`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Block geometry of one layer, without any data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    pub layer_shape: (usize, usize),
    pub block_size: usize,
    /// 1-D layer stored as a column; only left preconditioners, inverse square root.
    pub vector: bool,
    /// Number of whole block rows, `⌊m/B⌋`.
    pub full_rows: usize,
    /// Number of whole block columns, `⌊n/B⌋` (1 for vector layers with a whole chunk).
    pub full_cols: usize,
    pub placements: Vec<Placement>,
    num_full: usize,
}

impl BlockLayout {
    pub fn new(rows: usize, cols: usize, block_size: usize) -> Result<Self> {
        Self::build(rows, cols, block_size, false)
    }

    /// Layout of a length-`len` vector cut into `(B, 1)` chunks.
    pub fn for_vector(len: usize, block_size: usize) -> Result<Self> {
        Self::build(len, 1, block_size, true)
    }

    fn build(rows: usize, cols: usize, b: usize, vector: bool) -> Result<Self> {
        if b == 0 {
            return Err(Error::InvalidArgument("block size must be at least 1".into()));
        }
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot block an empty {rows}x{cols} layer"
            )));
        }
        let col_step = if vector { 1 } else { b };
        let mut full = Vec::new();
        let mut ragged = Vec::new();
        for row in (0..rows).step_by(b) {
            for col in (0..cols).step_by(col_step) {
                let p = Placement {
                    row,
                    col,
                    rows: b.min(rows - row),
                    cols: col_step.min(cols - col),
                };
                if p.rows == b && p.cols == col_step {
                    full.push(p);
                } else {
                    ragged.push(p);
                }
            }
        }
        let num_full = full.len();
        full.extend(ragged);
        Ok(Self {
            layer_shape: (rows, cols),
            block_size: b,
            vector,
            full_rows: rows / b,
            full_cols: cols / col_step,
            placements: full,
            num_full,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.placements.len()
    }

    pub fn num_full(&self) -> usize {
        self.num_full
    }

    pub fn remainder_placements(&self) -> &[Placement] {
        &self.placements[self.num_full..]
    }

    /// Root exponent used for this layer's preconditioners.
    pub fn exponent(&self) -> u32 {
        if self.vector {
            2
        } else {
            4
        }
    }

    /// Preconditioner dimension for `side` of block `i`, `None` when the side is unused.
    pub fn preconditioner_dim(&self, i: usize, side: Side) -> Option<usize> {
        let p = self.placements[i];
        match side {
            Side::Left => Some(p.rows),
            Side::Right if self.vector => None,
            Side::Right => Some(p.cols),
        }
    }

    /// Left and right preconditioner shapes of every block, in block order.
    pub fn preconditioner_shapes(&self) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
        let mut left = Vec::new();
        let mut right = Vec::new();
        for i in 0..self.num_blocks() {
            if let Some(d) = self.preconditioner_dim(i, Side::Left) {
                left.push((d, d));
            }
            if let Some(d) = self.preconditioner_dim(i, Side::Right) {
                right.push((d, d));
            }
        }
        (left, right)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockPartition {
    pub layout: BlockLayout,
    /// One matrix per placement, same order as `layout.placements`.
    pub blocks: Vec<Matrix>,
}

impl BlockPartition {
    /// The `B×B` blocks stacked as `(N_m·N_n, B, B)`. Vector layers have no square blocks.
    pub fn full_blocks(&self) -> Result<BatchedTensor> {
        if self.layout.vector {
            return Err(Error::InvalidArgument(
                "vector layers have no square gradient blocks".into(),
            ));
        }
        if self.layout.num_full() == 0 {
            return Ok(BatchedTensor::zeros(0, self.layout.block_size));
        }
        BatchedTensor::stack(&self.blocks[..self.layout.num_full()])
    }

    pub fn remainder_blocks(&self) -> &[Matrix] {
        &self.blocks[self.layout.num_full()..]
    }
}

fn cut(g: &Matrix, layout: BlockLayout) -> BlockPartition {
    let blocks = layout
        .placements
        .iter()
        .map(|p| g.submatrix(p.row, p.col, p.rows, p.cols))
        .collect();
    BlockPartition { layout, blocks }
}

pub fn partition(g: &Matrix, block_size: usize) -> Result<BlockPartition> {
    let layout = BlockLayout::new(g.rows(), g.cols(), block_size)?;
    Ok(cut(g, layout))
}

pub fn partition_vector(v: &[f64], block_size: usize) -> Result<BlockPartition> {
    let layout = BlockLayout::for_vector(v.len(), block_size)?;
    let g = Matrix::new(v.len(), 1, v.to_vec())?;
    Ok(cut(&g, layout))
}

pub fn preconditioner_shapes(p: &BlockPartition) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    p.layout.preconditioner_shapes()
}

/// Rebuilds the layer from `(block index, block)` pairs supplied in any order.
pub fn reassemble(layout: &BlockLayout, blocks: &[(usize, Matrix)]) -> Result<Matrix> {
    let (m, n) = layout.layer_shape;
    let mut seen = vec![false; layout.num_blocks()];
    let mut out = Matrix::zeros(m, n);
    for (i, b) in blocks {
        let Some(p) = layout.placements.get(*i) else {
            return Err(Error::InvalidArgument(format!(
                "block index {i} out of range for {} blocks",
                layout.num_blocks()
            )));
        };
        if b.shape() != (p.rows, p.cols) {
            return Err(Error::DimensionMismatch(format!(
                "block {i} should be {}x{}, got {:?}",
                p.rows,
                p.cols,
                b.shape()
            )));
        }
        if std::mem::replace(&mut seen[*i], true) {
            return Err(Error::InvalidArgument(format!("block {i} supplied twice")));
        }
        out.set_submatrix(p.row, p.col, b);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidArgument(format!("block {missing} missing")));
    }
    Ok(out)
}

/// Identifies one preconditioner block across the whole model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MemberKey {
    pub layer: usize,
    pub side: Side,
    pub block: usize,
}

/// Membership of one stack group; blocks share dimension and root exponent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPlan {
    pub dim: usize,
    pub exponent: u32,
    pub members: Vec<MemberKey>,
}

impl GroupPlan {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Groups every preconditioner block of the given `(layer id, layout)` pairs by shape.
/// Groups come out largest dimension first; the result does not depend on input order.
pub fn plan_stack_groups(layouts: &[(usize, &BlockLayout)]) -> Vec<GroupPlan> {
    let mut groups: BTreeMap<(std::cmp::Reverse<usize>, u32), Vec<MemberKey>> = BTreeMap::new();
    for (layer, layout) in layouts {
        for block in 0..layout.num_blocks() {
            for side in [Side::Left, Side::Right] {
                if let Some(d) = layout.preconditioner_dim(block, side) {
                    groups
                        .entry((std::cmp::Reverse(d), layout.exponent()))
                        .or_default()
                        .push(MemberKey {
                            layer: *layer,
                            side,
                            block,
                        });
                }
            }
        }
    }
    groups
        .into_iter()
        .map(|((std::cmp::Reverse(dim), exponent), mut members)| {
            members.sort();
            GroupPlan {
                dim,
                exponent,
                members,
            }
        })
        .collect()
}

/// Maps each member to `(group index, position in group)`.
pub fn member_index(plans: &[GroupPlan]) -> HashMap<MemberKey, (usize, usize)> {
    let mut map = HashMap::new();
    for (g, plan) in plans.iter().enumerate() {
        for (pos, key) in plan.members.iter().enumerate() {
            map.insert(*key, (g, pos));
        }
    }
    map
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackGroup {
    pub plan: GroupPlan,
    pub tensor: BatchedTensor,
}

impl StackGroup {
    /// Fills a group by asking `fetch` for each member block in order.
    pub fn gather(plan: GroupPlan, mut fetch: impl FnMut(&MemberKey) -> Matrix) -> Result<Self> {
        let blocks: Vec<Matrix> = plan.members.iter().map(&mut fetch).collect();
        for (k, b) in plan.members.iter().zip(&blocks) {
            if b.shape() != (plan.dim, plan.dim) {
                return Err(Error::DimensionMismatch(format!(
                    "member {k:?} is {:?}, group holds {}x{}",
                    b.shape(),
                    plan.dim,
                    plan.dim
                )));
            }
        }
        let tensor = if blocks.is_empty() {
            BatchedTensor::zeros(0, plan.dim)
        } else {
            BatchedTensor::stack(&blocks)?
        };
        Ok(Self { plan, tensor })
    }

    pub fn scatter(&self) -> Vec<(MemberKey, Matrix)> {
        self.plan
            .members
            .iter()
            .enumerate()
            .map(|(i, k)| (*k, self.tensor.block(i)))
            .collect()
    }
}

/// Stack groups holding each block's instantaneous statistics: `GGᵀ` on the left, `GᵀG` on
/// the right.
pub fn build_stack_groups(partitions: &[(usize, &BlockPartition)]) -> Result<Vec<StackGroup>> {
    let by_layer: HashMap<usize, &BlockPartition> = partitions.iter().copied().collect();
    if by_layer.len() != partitions.len() {
        return Err(Error::InvalidArgument("duplicate layer id".into()));
    }
    let layouts: Vec<(usize, &BlockLayout)> =
        partitions.iter().map(|(id, p)| (*id, &p.layout)).collect();
    plan_stack_groups(&layouts)
        .into_iter()
        .map(|plan| {
            StackGroup::gather(plan, |k| {
                let g = &by_layer[&k.layer].blocks[k.block];
                match k.side {
                    Side::Left => gram_rows(g),
                    Side::Right => gram_cols(g),
                }
            })
        })
        .collect()
}

/// `N` equal-length vector layers cut into `(B, 1)` column chunks, chunk-major within each
/// layer. A length not divisible by `B` leaves one ragged `(E mod B, 1)` chunk per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStack {
    pub layers: usize,
    pub len: usize,
    pub block_size: usize,
    /// `layers · ⌊len/B⌋` chunks of length `B`.
    pub full: Vec<Vec<f64>>,
    /// One chunk per layer when `B ∤ len`, otherwise empty.
    pub ragged: Vec<Vec<f64>>,
}

pub fn stack_norm_layers(layers: &[Vec<f64>], block_size: usize) -> Result<NormStack> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument("no layers to stack".into()));
    }
    if block_size == 0 {
        return Err(Error::InvalidArgument("block size must be at least 1".into()));
    }
    let len = layers[0].len();
    if len == 0 || layers.iter().any(|l| l.len() != len) {
        return Err(Error::DimensionMismatch(
            "norm layers must share one nonzero length".into(),
        ));
    }
    let per_layer = len / block_size;
    let mut full = Vec::with_capacity(layers.len() * per_layer);
    let mut ragged = Vec::new();
    for l in layers {
        let (whole, rest) = l.split_at(per_layer * block_size);
        full.extend(whole.chunks(block_size).map(<[f64]>::to_vec));
        if !rest.is_empty() {
            ragged.push(rest.to_vec());
        }
    }
    Ok(NormStack {
        layers: layers.len(),
        len,
        block_size,
        full,
        ragged,
    })
}

impl NormStack {
    /// Shape of the stacked full-chunk gradient, `(count, B, 1)`.
    pub fn gradient_shape(&self) -> (usize, usize, usize) {
        (self.full.len(), self.block_size, 1)
    }

    pub fn ragged_shape(&self) -> Option<(usize, usize, usize)> {
        self.ragged.first().map(|r| (self.ragged.len(), r.len(), 1))
    }

    /// `g gᵀ` per chunk: `(count, B, B)` plus the ragged group, if any.
    pub fn left_statistics(&self) -> Result<(BatchedTensor, Option<BatchedTensor>)> {
        let outer = |v: &Vec<f64>| Matrix::from_fn(v.len(), v.len(), |i, j| v[i] * v[j]);
        let full = if self.full.is_empty() {
            BatchedTensor::zeros(0, self.block_size)
        } else {
            BatchedTensor::stack(&self.full.iter().map(outer).collect::<Vec<_>>())?
        };
        let ragged = if self.ragged.is_empty() {
            None
        } else {
            Some(BatchedTensor::stack(
                &self.ragged.iter().map(outer).collect::<Vec<_>>(),
            )?)
        };
        Ok((full, ragged))
    }

    /// Multiplies every chunk by its matrix: `u_i = M_i g_i`.
    pub fn apply_left(&self, full: &BatchedTensor, ragged: Option<&BatchedTensor>) -> Result<NormStack> {
        fn apply(chunks: &[Vec<f64>], m: &BatchedTensor) -> Result<Vec<Vec<f64>>> {
            if m.batch() != chunks.len() || chunks.first().is_some_and(|c| c.len() != m.dim()) {
                return Err(Error::DimensionMismatch(format!(
                    "{} chunks against a batch of {} {}x{} matrices",
                    chunks.len(),
                    m.batch(),
                    m.dim(),
                    m.dim()
                )));
            }
            Ok(chunks
                .iter()
                .enumerate()
                .map(|(i, c)| m.block(i).dot_vec(c))
                .collect())
        }
        let new_ragged = match (self.ragged.is_empty(), ragged) {
            (true, _) => Vec::new(),
            (false, Some(m)) => apply(&self.ragged, m)?,
            (false, None) => {
                return Err(Error::InvalidArgument(
                    "ragged chunks present but no matrices supplied".into(),
                ))
            }
        };
        Ok(NormStack {
            full: apply(&self.full, full)?,
            ragged: new_ragged,
            ..self.clone()
        })
    }

    /// Back to one vector per layer.
    pub fn scatter(&self) -> Vec<Vec<f64>> {
        let per_layer = self.len / self.block_size;
        (0..self.layers)
            .map(|l| {
                let mut v: Vec<f64> = self.full[l * per_layer..(l + 1) * per_layer]
                    .iter()
                    .flatten()
                    .copied()
                    .collect();
                if let Some(r) = self.ragged.get(l) {
                    v.extend_from_slice(r);
                }
                v
            })
            .collect()
    }
}
