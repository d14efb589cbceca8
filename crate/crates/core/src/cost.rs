//! The storage-model latency objective and the step-index-complexity bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{IndexDesign, Key, KeyPositionSet, LayerDesign, ModelError};
use crate::par::Exec;
use crate::storage::StorageProfile;

/// Ideal size of a one-piece step node: 8-byte key + 8-byte position.
pub const STEP_PIECE_SIZE: f64 = 16.0;

/// Collections up to this many keys are evaluated exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 1_000_000;
pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("key {0} is not in the data")]
    KeyAbsent(Key),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `T(s(Θ_L)) + Σ T(Δ(x; Θ_l))`, itemized.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub root_cost: f64,
    /// Reads below the root, top-down: layer `L−1` first, data layer last.
    pub per_layer_costs: Vec<f64>,
    pub total: f64,
}

impl CostBreakdown {
    /// Cost of reading `root_size` bytes and then each of `deltas` in order.
    pub fn from_reads(profile: &StorageProfile, root_size: u64, deltas: &[u64]) -> Self {
        let root_cost = profile.cost_bytes(root_size);
        let per_layer_costs: Vec<f64> = deltas.iter().map(|&d| profile.cost_bytes(d)).collect();
        let total = per_layer_costs.iter().fold(root_cost, |acc, c| acc + c);
        CostBreakdown {
            root_cost,
            per_layer_costs,
            total,
        }
    }
}

/// Modeled latency of looking up `x`. With no index layers the whole data
/// extent is read.
pub fn lookup_cost(
    design: &IndexDesign,
    data: &KeyPositionSet,
    x: Key,
    profile: &StorageProfile,
) -> Result<CostBreakdown, CostError> {
    data.find(x).ok_or(CostError::KeyAbsent(x))?;
    let Some(root_size) = design.root_size() else {
        return Ok(CostBreakdown::from_reads(profile, data.total_extent(), &[]));
    };
    let deltas = design
        .layers
        .iter()
        .rev()
        .map(|layer| layer.predict(x).map(|r| r.len()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CostBreakdown::from_reads(profile, root_size, &deltas))
}

/// Which keys the expectation is taken over.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum QueryDistribution {
    /// Exhaustive up to `EXHAUSTIVE_LIMIT` keys, seeded sample above.
    #[default]
    Auto,
    Exhaustive,
    /// Uniform draws (with replacement) from the existing keys.
    Sampled { samples: usize, seed: u64 },
    /// Explicit query keys; must be data keys.
    Keys(Vec<Key>),
}

/// Sorted query keys for `dist` over `data`.
pub fn query_keys(data: &KeyPositionSet, dist: &QueryDistribution) -> Vec<Key> {
    let sampled = |samples: usize, seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keys: Vec<Key> = (0..samples)
            .map(|_| data.keys()[rng.gen_range(0..data.len())])
            .collect();
        keys.sort_unstable();
        keys
    };
    match dist {
        _ if data.is_empty() => Vec::new(),
        QueryDistribution::Exhaustive => data.keys().to_vec(),
        QueryDistribution::Auto if data.len() <= EXHAUSTIVE_LIMIT => data.keys().to_vec(),
        QueryDistribution::Auto => sampled(DEFAULT_SAMPLES, DEFAULT_SEED),
        QueryDistribution::Sampled { samples, seed } => sampled(*samples, *seed),
        QueryDistribution::Keys(keys) => {
            let mut keys = keys.clone();
            keys.sort_unstable();
            keys
        }
    }
}

/// `Σ w_i T(|ŷ(x_i)|) / Σ w_i` for ascending `keys`; unit weights when
/// `weights` is `None`.
pub fn layer_mean_cost(
    layer: &LayerDesign,
    keys: &[Key],
    weights: Option<&[u64]>,
    profile: &StorageProfile,
    exec: Exec,
) -> Result<f64, ModelError> {
    if keys.is_empty() {
        return Ok(0.0);
    }
    if let Some(&x) = keys.first() {
        layer.route(x).ok_or(ModelError::OutOfDomain(x))?;
    }
    let total_weight = match weights {
        Some(w) => w.iter().sum::<u64>() as f64,
        None => keys.len() as f64,
    };
    if total_weight == 0.0 {
        return Ok(0.0);
    }
    let sum = exec.sum(keys.len(), |r| {
        let base = r.start;
        let mut acc = 0.0;
        layer.predict_sorted(&keys[r], |i, hit| {
            let w = weights.map_or(1, |w| w[base + i]);
            if w != 0 {
                // Routing of the first key was checked above.
                let width = hit.map_or(0, |(_, p)| p.len());
                acc += w as f64 * profile.cost_bytes(width);
            }
        });
        acc
    });
    Ok(sum / total_weight)
}

/// Mean lookup cost over `dist`. Sums root first, then layers top-down.
pub fn expected_cost(
    design: &IndexDesign,
    data: &KeyPositionSet,
    profile: &StorageProfile,
    dist: &QueryDistribution,
) -> Result<f64, CostError> {
    expected_cost_with(design, data, profile, dist, Exec::Sequential)
}

pub fn expected_cost_with(
    design: &IndexDesign,
    data: &KeyPositionSet,
    profile: &StorageProfile,
    dist: &QueryDistribution,
    exec: Exec,
) -> Result<f64, CostError> {
    let keys = query_keys(data, dist);
    if let Some(&absent) = keys.iter().find(|&&k| data.find(k).is_none()) {
        return Err(CostError::KeyAbsent(absent));
    }
    let Some(root_size) = design.root_size() else {
        return Ok(profile.cost_bytes(data.total_extent()));
    };
    let mut total = profile.cost_bytes(root_size);
    for layer in design.layers.iter().rev() {
        total += layer_mean_cost(layer, &keys, None, profile, exec)?;
    }
    Ok(total)
}

/// Mean bytes read per lookup: the root plus each layer's predicted range.
pub fn expected_read_volume(
    design: &IndexDesign,
    data: &KeyPositionSet,
    dist: &QueryDistribution,
) -> Result<f64, CostError> {
    let keys = query_keys(data, dist);
    let Some(root_size) = design.root_size() else {
        return Ok(data.total_extent() as f64);
    };
    if keys.is_empty() {
        return Ok(root_size as f64);
    }
    let mut total = root_size as f64;
    for layer in design.layers.iter().rev() {
        let mut sum = 0u128;
        let mut missing = None;
        layer.predict_sorted(&keys, |i, hit| match hit {
            Some((_, r)) => sum += r.len() as u128,
            None => missing = missing.or(Some(keys[i])),
        });
        if let Some(x) = missing {
            return Err(CostError::Model(ModelError::OutOfDomain(x)));
        }
        total += sum as f64 / keys.len() as f64;
    }
    Ok(total)
}

/// Size of every read in an ideal balanced `L`-layer step index over `s_D`
/// bytes: `(s_D · 16^L)^(1/(L+1))`.
pub fn balanced_read_size(s_d: f64, layers: usize) -> f64 {
    if layers == 0 {
        return s_d;
    }
    let l = layers as f64;
    ((s_d.ln() + l * STEP_PIECE_SIZE.ln()) / (l + 1.0)).exp()
}

/// `τ̂(D; T) = min_L (L+1)·T((s_D·16^L)^(1/(L+1)))` over
/// `L ∈ {0, …, ⌈log₂ s_D⌉}`; returns the minimum and the smallest argmin.
pub fn step_index_complexity(s_d: u64, profile: &StorageProfile) -> (f64, usize) {
    let max_layers = if s_d <= 1 {
        0
    } else {
        (64 - (s_d - 1).leading_zeros()) as usize
    };
    let s = s_d as f64;
    let mut best = (profile.cost(s), 0);
    for layers in 1..=max_layers {
        let c = (layers as f64 + 1.0) * profile.cost(balanced_read_size(s, layers));
        if c < best.0 {
            best = (c, layers);
        }
    }
    best
}

/// Latency with a hypothetical 1-byte root of 1-byte precision on top.
pub fn ideal_latency_with_index(_current_extent: u64, profile: &StorageProfile) -> f64 {
    profile.cost(1.0) + profile.cost(1.0)
}
