//! Greedy layer-to-worker assignment and a simple synchronization cost model.
//!
//! Layers are taken largest first (ties by id) and each goes to the least-loaded worker, the
//! lowest worker index winning ties. Only volumes are modelled; nothing is sent anywhere.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSize {
    pub id: usize,
    pub params: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WorkerLoad {
    /// Layer ids in assignment order.
    pub layers: Vec<usize>,
    pub load: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub workers: Vec<WorkerLoad>,
}

impl Assignment {
    pub fn makespan(&self) -> u64 {
        self.workers.iter().map(|w| w.load).max().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.workers.iter().map(|w| w.load).sum()
    }

    /// `(worker, layer id)` pairs, worker-major.
    pub fn rows(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.workers
            .iter()
            .enumerate()
            .flat_map(|(w, wl)| wl.layers.iter().map(move |&l| (w, l)))
    }
}

pub fn greedy_balance(layers: &[LayerSize], workers: usize) -> Result<Assignment> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument("no layers to assign".into()));
    }
    if workers == 0 {
        return Err(Error::InvalidArgument("need at least one worker".into()));
    }
    if let Some(l) = layers.iter().find(|l| l.params == 0) {
        return Err(Error::InvalidArgument(format!("layer {} has no parameters", l.id)));
    }
    let mut ids: Vec<usize> = layers.iter().map(|l| l.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("duplicate layer id".into()));
    }
    let mut order = layers.to_vec();
    order.sort_by(|a, b| b.params.cmp(&a.params).then(a.id.cmp(&b.id)));
    let mut out = vec![WorkerLoad::default(); workers];
    for l in order {
        let w = (0..workers)
            .min_by_key(|&w| (out[w].load, w))
            .expect("at least one worker");
        out[w].layers.push(l.id);
        out[w].load += l.params;
    }
    Ok(Assignment { workers: out })
}

/// Invented cost parameters: per-parameter compute time and broadcast bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub seconds_per_param: f64,
    pub params_per_second_broadcast: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            seconds_per_param: 1e-9,
            params_per_second_broadcast: 1e10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncReport {
    /// Largest per-worker load, in parameters.
    pub makespan: u64,
    /// Parameters broadcast after the step: every layer once.
    pub broadcast_volume: u64,
    pub compute_seconds: f64,
    pub broadcast_seconds: f64,
}

pub fn simulate_sync_cost(a: &Assignment, model: &CostModel) -> SyncReport {
    let makespan = a.makespan();
    let volume = a.total();
    SyncReport {
        makespan,
        broadcast_volume: volume,
        compute_seconds: makespan as f64 * model.seconds_per_param,
        broadcast_seconds: volume as f64 / model.params_per_second_broadcast,
    }
}

/// Smallest achievable makespan by exhaustive search, for small instances.
pub fn optimal_makespan(sizes: &[u64], workers: usize) -> u64 {
    fn go(i: usize, sizes: &[u64], loads: &mut [u64], best: &mut u64) {
        if i == sizes.len() {
            *best = (*best).min(*loads.iter().max().unwrap_or(&0));
            return;
        }
        let mut tried_empty = false;
        for w in 0..loads.len() {
            // all empty workers are interchangeable
            if loads[w] == 0 {
                if tried_empty {
                    continue;
                }
                tried_empty = true;
            }
            if loads[w] + sizes[i] >= *best {
                continue;
            }
            loads[w] += sizes[i];
            go(i + 1, sizes, loads, best);
            loads[w] -= sizes[i];
        }
    }
    if workers == 0 {
        return u64::MAX;
    }
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let mut best = sorted.iter().sum::<u64>() + 1;
    go(0, &sorted, &mut vec![0; workers], &mut best);
    best
}

/// Parses `id params` lines; blank lines and `#` comments are skipped.
pub fn parse_layer_sizes(text: &str) -> Result<Vec<LayerSize>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let parsed = match parts.as_slice() {
            [id, params] => id.parse().ok().zip(params.parse().ok()),
            _ => None,
        };
        let (id, params) = parsed.ok_or_else(|| Error::Parse {
            line: ln + 1,
            message: format!("expected `id params`, got `{line}`"),
        })?;
        out.push(LayerSize { id, params });
    }
    Ok(out)
}
