//! Guided search over builder chains for the design with the lowest modeled
//! lookup latency.
//!
//! Each branch carries a key-position collection plus, per pair, the number
//! of query keys that reach it. Layer `l`'s mean read cost is taken over the
//! query keys routed through that layer, so a design's objective is the sum
//! of per-branch terms and every explored chain is scored exactly as
//! [`design_objective`] scores it.

use std::cmp::Ordering;

use serde::Serialize;
use thiserror::Error;

use crate::builders::{outline, BuilderError, BuilderSet, BuilderSpec};
use crate::cost::{
    expected_cost_with, ideal_latency_with_index, layer_mean_cost, query_keys,
    step_index_complexity, CostBreakdown, CostError, QueryDistribution,
};
use crate::model::{IndexDesign, Key, KeyPositionSet, LayerDesign, ModelError};
use crate::par::Exec;
use crate::storage::StorageProfile;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_MAX_LAYERS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TuneError {
    #[error("cannot tune over an empty collection")]
    EmptyData,
    #[error("invalid tuning configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Builder(#[from] BuilderError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneConfig {
    pub k: usize,
    pub builder_set: BuilderSet,
    pub max_layers: usize,
    pub parallelism: usize,
    pub queries: QueryDistribution,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            k: DEFAULT_K,
            builder_set: BuilderSet::standard(),
            max_layers: DEFAULT_MAX_LAYERS,
            parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
            queries: QueryDistribution::Auto,
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<(), TuneError> {
        let bad = |m: &str| Err(TuneError::InvalidConfig(m.into()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.max_layers == 0 {
            return bad("max_layers must be at least 1");
        }
        if self.builder_set.is_empty() {
            return bad("builder set is empty");
        }
        for b in &self.builder_set.builders {
            b.validate()?;
        }
        Ok(())
    }
}

/// One built next-layer option for a branch.
#[derive(Debug, Clone)]
pub struct Candidate {
    /// Position in the builder set.
    pub builder: usize,
    pub spec: BuilderSpec,
    pub layer: LayerDesign,
    pub outlined: KeyPositionSet,
    /// Query keys routed to each outlined pair.
    pub weights: Vec<u64>,
    /// Weighted mean `T(Δ)` of this layer.
    pub mean_cost: f64,
    /// `τ̂(outlined) + mean_cost`.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub design: IndexDesign,
    /// Builder of each layer, data side first.
    pub builders: Vec<BuilderSpec>,
    /// Modeled cost the search minimized.
    pub objective: f64,
    /// Number of candidate layers built.
    pub explored: usize,
}

/// Lowest `k` by score, then smaller outlined extent, then builder order.
pub fn select_top_k(mut candidates: Vec<Candidate>, k: usize) -> Vec<Candidate> {
    candidates.sort_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then(a.outlined.total_extent().cmp(&b.outlined.total_extent()))
            .then(a.builder.cmp(&b.builder))
    });
    candidates.truncate(k);
    candidates
}

/// `τ̂(outlined) + E[T(Δ)]` with keys drawn from `data` (exhaustive up to
/// 10⁶ keys, else a seeded sample).
pub fn score_candidate(
    layer: &LayerDesign,
    outlined: &KeyPositionSet,
    data: &KeyPositionSet,
    profile: &StorageProfile,
) -> Result<f64, TuneError> {
    let (keys, weights) = level_one_weights(data, &QueryDistribution::Auto)?;
    let mean = layer_mean_cost(layer, keys, weights.as_deref(), profile, Exec::Sequential)?;
    Ok(step_index_complexity(outlined.total_extent(), profile).0 + mean)
}

/// Query-key counts over `data`'s pairs; `None` means one per pair.
fn level_one_weights<'a>(
    data: &'a KeyPositionSet,
    dist: &QueryDistribution,
) -> Result<(&'a [Key], Option<Vec<u64>>), TuneError> {
    let exhaustive = match dist {
        QueryDistribution::Exhaustive => true,
        QueryDistribution::Auto => data.len() <= crate::cost::EXHAUSTIVE_LIMIT,
        _ => false,
    };
    if exhaustive {
        return Ok((data.keys(), None));
    }
    let mut counts = vec![0u64; data.len()];
    for x in query_keys(data, dist) {
        let i = data.find(x).ok_or(CostError::KeyAbsent(x))?;
        counts[i] += 1;
    }
    Ok((data.keys(), Some(counts)))
}

/// Per-node totals of `weights` for ascending `keys` routed through `layer`.
fn route_weights(layer: &LayerDesign, keys: &[Key], weights: Option<&[u64]>) -> Vec<u64> {
    let lower = layer.lower_keys();
    let mut out = vec![0u64; lower.len()];
    let mut j = 0;
    for (i, &x) in keys.iter().enumerate() {
        while j + 1 < lower.len() && lower[j + 1] <= x {
            j += 1;
        }
        out[j] += weights.map_or(1, |w| w[i]);
    }
    out
}

/// Modeled cost of `design` as the search scores it: root read, then each
/// layer's mean read over the query keys routed into it, top-down.
pub fn objective_breakdown(
    design: &IndexDesign,
    data: &KeyPositionSet,
    profile: &StorageProfile,
    dist: &QueryDistribution,
) -> Result<CostBreakdown, TuneError> {
    if data.is_empty() {
        return Err(TuneError::EmptyData);
    }
    let Some(root_size) = design.root_size() else {
        return Ok(CostBreakdown::from_reads(profile, data.total_extent(), &[]));
    };
    let (keys, weights) = level_one_weights(data, dist)?;
    let mut keys: Vec<Key> = keys.to_vec();
    let mut weights = weights;
    let mut means = Vec::with_capacity(design.num_layers());
    for layer in &design.layers {
        means.push(layer_mean_cost(layer, &keys, weights.as_deref(), profile, Exec::Sequential)?);
        weights = Some(route_weights(layer, &keys, weights.as_deref()));
        keys = layer.lower_keys().to_vec();
    }
    let root_cost = profile.cost_bytes(root_size);
    means.reverse();
    let total = means.iter().fold(root_cost, |acc, m| acc + m);
    Ok(CostBreakdown {
        root_cost,
        per_layer_costs: means,
        total,
    })
}

pub fn design_objective(
    design: &IndexDesign,
    data: &KeyPositionSet,
    profile: &StorageProfile,
    dist: &QueryDistribution,
) -> Result<f64, TuneError> {
    objective_breakdown(design, data, profile, dist).map(|b| b.total)
}

/// Best sub-design found for a branch, layers data side first.
struct Branch {
    layers: Vec<(LayerDesign, BuilderSpec)>,
    cost: f64,
    root_bytes: u64,
    explored: usize,
}

struct Search<'a> {
    profile: &'a StorageProfile,
    config: &'a TuneConfig,
    ideal: f64,
    exec: Exec,
}

impl Search<'_> {
    fn candidates(&self, data: &KeyPositionSet, keys: &[Key], weights: Option<&[u64]>) -> Vec<Candidate> {
        let extent = data.total_extent();
        let specs: Vec<(usize, BuilderSpec)> =
            self.config.builder_set.builders.iter().copied().enumerate().collect();
        self.exec
            .map(&specs, |&(builder, spec)| {
                let layer = spec.build_with(data, self.exec).ok()?;
                let outlined = outline(&layer);
                if outlined.total_extent() >= extent {
                    return None;
                }
                let mean_cost = layer_mean_cost(&layer, keys, weights, self.profile, self.exec).ok()?;
                let score = step_index_complexity(outlined.total_extent(), self.profile).0 + mean_cost;
                let weights = route_weights(&layer, keys, weights);
                Some(Candidate {
                    builder,
                    spec,
                    layer,
                    outlined,
                    weights,
                    mean_cost,
                    score,
                })
            })
            .into_iter()
            .flatten()
            .collect()
    }

    fn explore(&self, data: &KeyPositionSet, keys: &[Key], weights: Option<&[u64]>, depth: usize) -> Branch {
        let extent = data.total_extent();
        let empty = Branch {
            layers: Vec::new(),
            cost: self.profile.cost_bytes(extent),
            root_bytes: extent,
            explored: 0,
        };
        if empty.cost < self.ideal || depth >= self.config.max_layers {
            return empty;
        }
        let top = select_top_k(self.candidates(data, keys, weights), self.config.k);
        let subs = self.exec.map(&top, |c| {
            self.explore(&c.outlined, c.outlined.keys(), Some(&c.weights), depth + 1)
        });
        let explored = self.config.builder_set.len() + subs.iter().map(|s| s.explored).sum::<usize>();
        let mut best = empty;
        for (c, sub) in top.into_iter().zip(subs) {
            let cost = sub.cost + c.mean_cost;
            let layers = sub.layers.len() + 1;
            let better = match cost.total_cmp(&best.cost) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => (layers, sub.root_bytes) < (best.layers.len(), best.root_bytes),
            };
            if better {
                let mut chain = vec![(c.layer, c.spec)];
                chain.extend(sub.layers);
                best = Branch {
                    layers: chain,
                    cost,
                    root_bytes: sub.root_bytes,
                    explored: 0,
                };
            }
        }
        best.explored = explored;
        best
    }
}

/// Recursively builds every candidate next layer, keeps the `k` best by
/// score, and returns the cheapest design found. A branch stops when reading
/// its whole collection beats an ideal one-byte index, or at `max_layers`.
pub fn airtune(
    data: &KeyPositionSet,
    profile: &StorageProfile,
    config: &TuneConfig,
) -> Result<TuneResult, TuneError> {
    config.validate()?;
    profile
        .validate()
        .map_err(|e| TuneError::InvalidConfig(e.to_string()))?;
    if data.is_empty() {
        return Err(TuneError::EmptyData);
    }
    let (keys, weights) = level_one_weights(data, &config.queries)?;
    let branch = Exec::install(config.parallelism, |exec| {
        let search = Search {
            profile,
            config,
            ideal: ideal_latency_with_index(data.total_extent(), profile),
            exec,
        };
        search.explore(data, keys, weights.as_deref(), 0)
    });
    let (layers, builders) = branch.layers.into_iter().unzip();
    Ok(TuneResult {
        design: IndexDesign::new(layers),
        builders,
        objective: branch.cost,
        explored: branch.explored,
    })
}

/// `spec` applied layer by layer until the stopping rule fires, the output
/// stops shrinking, or `max_layers` is reached.
pub fn greedy_chain(
    spec: BuilderSpec,
    data: &KeyPositionSet,
    profile: &StorageProfile,
    max_layers: usize,
) -> Result<IndexDesign, TuneError> {
    let ideal = ideal_latency_with_index(data.total_extent(), profile);
    let mut layers = Vec::new();
    let mut current = data.clone();
    while layers.len() < max_layers && profile.cost_bytes(current.total_extent()) >= ideal {
        let layer = spec.build(&current)?;
        let next = outline(&layer);
        if next.total_extent() >= current.total_extent() {
            break;
        }
        layers.push(layer);
        current = next;
    }
    Ok(IndexDesign::new(layers))
}

/// Page-based B-tree equivalent: `GStep(p, page)` layers until the root
/// fits in one page.
pub fn btree_design(data: &KeyPositionSet, pieces: usize, page: u64) -> Result<IndexDesign, TuneError> {
    let spec = BuilderSpec::GStep { pieces, lambda: page };
    let mut layers = Vec::new();
    let mut current = data.clone();
    loop {
        let layer = spec.build(&current)?;
        let next = outline(&layer);
        let done = next.total_extent() <= page || next.total_extent() >= current.total_extent();
        layers.push(layer);
        current = next;
        if done {
            return Ok(IndexDesign::new(layers));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerReport {
    /// 1 is the layer just above the data.
    pub level: usize,
    pub builder: String,
    pub node_type: String,
    pub nodes: usize,
    pub bytes: u64,
    pub mean_read_cost_s: f64,
}

/// Summary of a tuning run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneReport {
    pub explored: usize,
    pub num_layers: usize,
    pub objective_s: f64,
    /// Mean cost over every query key evaluated layer by layer.
    pub expected_cost_s: f64,
    pub root_cost_s: f64,
    pub layers: Vec<LayerReport>,
}

impl TuneResult {
    pub fn report(
        &self,
        data: &KeyPositionSet,
        profile: &StorageProfile,
        dist: &QueryDistribution,
    ) -> Result<TuneReport, TuneError> {
        let breakdown = objective_breakdown(&self.design, data, profile, dist)?;
        let expected = expected_cost_with(&self.design, data, profile, dist, Exec::Sequential)?;
        let n = self.design.num_layers();
        let layers = self
            .design
            .layers
            .iter()
            .zip(&self.builders)
            .enumerate()
            .map(|(i, (layer, spec))| LayerReport {
                level: i + 1,
                builder: spec.to_string(),
                node_type: layer.kind().to_string(),
                nodes: layer.node_count(),
                bytes: layer.serialized_size(),
                mean_read_cost_s: breakdown.per_layer_costs[n - 1 - i],
            })
            .collect();
        Ok(TuneReport {
            explored: self.explored,
            num_layers: n,
            objective_s: breakdown.total,
            expected_cost_s: expected,
            root_cost_s: breakdown.root_cost,
            layers,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::default_builder_set;
    use crate::model::{validate_design, PositionRange};

    fn uniform(n: u64) -> KeyPositionSet {
        KeyPositionSet::from_pairs((0..n).map(|i| (7 * i + 3, PositionRange::new(16 * i, 16 * i + 16)))).unwrap()
    }

    fn small_config(k: usize) -> TuneConfig {
        TuneConfig {
            k,
            builder_set: default_builder_set(64, 4096, 4.0, 16).unwrap(),
            max_layers: 4,
            parallelism: 1,
            queries: QueryDistribution::Exhaustive,
        }
    }

    fn cand(builder: usize, score: f64, extent: u64) -> Candidate {
        let data = KeyPositionSet::from_pairs([(1, PositionRange::new(0, extent))]).unwrap();
        let layer = crate::builders::build_gstep(&data, 1, 64).unwrap();
        Candidate {
            builder,
            spec: BuilderSpec::GStep { pieces: 1, lambda: 64 },
            outlined: data,
            layer,
            weights: vec![1],
            mean_cost: 0.0,
            score,
        }
    }

    #[test]
    fn top_k_selection() {
        let picked = select_top_k(vec![cand(0, 5e-3, 10), cand(1, 3e-3, 10), cand(2, 9e-3, 10)], 2);
        assert_eq!(picked.iter().map(|c| c.builder).collect::<Vec<_>>(), vec![1, 0]);
        let one = select_top_k(vec![cand(0, 5e-3, 10), cand(1, 3e-3, 10)], 1);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].builder, 1);
        let tie = select_top_k(vec![cand(0, 1.0, 30), cand(1, 1.0, 20), cand(2, 1.0, 20)], 3);
        assert_eq!(tie.iter().map(|c| c.builder).collect::<Vec<_>>(), vec![1, 2, 0]);
        assert_eq!(select_top_k(vec![cand(0, 1.0, 1)], 5).len(), 1);
    }

    #[test]
    fn tiny_extent_needs_no_index() {
        let data = KeyPositionSet::from_pairs([(5, PositionRange::new(0, 16))]).unwrap();
        for p in [StorageProfile::nfs(), StorageProfile::ssd(), StorageProfile::affine(1e-6, 1e3).unwrap()] {
            let r = airtune(&data, &p, &TuneConfig::default()).unwrap();
            assert_eq!(r.design.num_layers(), 0);
            assert_eq!(r.objective, p.cost_bytes(16));
        }
    }

    #[test]
    fn result_is_valid_and_matches_objective() {
        let data = uniform(20_000);
        let p = StorageProfile::affine(1e-4, 1e8).unwrap();
        let r = airtune(&data, &p, &small_config(3)).unwrap();
        assert!(r.design.num_layers() >= 1);
        assert!(validate_design(&r.design, &data).is_empty());
        let obj = design_objective(&r.design, &data, &p, &QueryDistribution::Exhaustive).unwrap();
        assert_eq!(obj.to_bits(), r.objective.to_bits());
        assert!(r.objective < p.cost_bytes(data.total_extent()));
    }

    #[test]
    fn parallelism_does_not_change_result() {
        let data = uniform(30_000);
        let p = StorageProfile::ssd();
        let a = airtune(&data, &p, &small_config(2)).unwrap();
        let b = airtune(&data, &p, &TuneConfig { parallelism: 4, ..small_config(2) }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn step_layers_objective_is_exact_expected_cost() {
        let data = uniform(10_000);
        let p = StorageProfile::affine(1e-5, 1e8).unwrap();
        let l1 = crate::builders::build_gstep(&data, 16, 256).unwrap();
        let l2 = crate::builders::build_gstep(&outline(&l1), 16, 1024).unwrap();
        let design = IndexDesign::new(vec![l1, l2]);
        let obj = design_objective(&design, &data, &p, &QueryDistribution::Exhaustive).unwrap();
        let exact = crate::cost::expected_cost(&design, &data, &p, &QueryDistribution::Exhaustive).unwrap();
        assert!((obj - exact).abs() <= 1e-12 * exact);
    }

    #[test]
    fn score_matches_direct_enumeration() {
        let data = uniform(200);
        let p = StorageProfile::ssd();
        let layer = crate::builders::build_eband(&data, 256).unwrap();
        let o = outline(&layer);
        let direct: f64 = data
            .keys()
            .iter()
            .map(|&x| p.cost_bytes(layer.predict(x).unwrap().len()))
            .sum::<f64>()
            / 200.0;
        let want = step_index_complexity(o.total_extent(), &p).0 + direct;
        let got = score_candidate(&layer, &o, &data, &p).unwrap();
        assert!((got - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn sampled_weights_cover_sample() {
        let data = uniform(1000);
        let dist = QueryDistribution::Sampled { samples: 500, seed: 9 };
        let (_, w) = level_one_weights(&data, &dist).unwrap();
        assert_eq!(w.unwrap().iter().sum::<u64>(), 500);
    }

    #[test]
    fn btree_root_fits_a_page() {
        let data = uniform(200_000);
        let d = btree_design(&data, 16, 4096).unwrap();
        assert_eq!(d.num_layers(), 2);
        assert!(d.root_size().unwrap() <= 4096);
        assert!(validate_design(&d, &data).is_empty());
    }

    #[test]
    fn tuner_dominates_greedy_chains() {
        let data = uniform(20_000);
        let p = StorageProfile::affine(1e-4, 1e8).unwrap();
        let config = small_config(1);
        let r = airtune(&data, &p, &config).unwrap();
        for &spec in &config.builder_set.builders {
            let chain = greedy_chain(spec, &data, &p, config.max_layers).unwrap();
            let c = design_objective(&chain, &data, &p, &QueryDistribution::Exhaustive).unwrap();
            assert!(r.objective <= c, "{spec}: {} > {c}", r.objective);
        }
    }

    #[test]
    fn config_validation() {
        assert!(TuneConfig { k: 0, ..TuneConfig::default() }.validate().is_err());
        assert!(TuneConfig { max_layers: 0, ..TuneConfig::default() }.validate().is_err());
        assert!(airtune(&KeyPositionSet::default(), &StorageProfile::ssd(), &TuneConfig::default()).is_err());
    }
}
