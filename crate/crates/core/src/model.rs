//! The hierarchical index model: key-position collections, step and band
//! node predictors, layers, and whole-index designs.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub type Key = u64;

/// Stands in for the unbounded final partition key; never a data key.
pub const MAX_KEY: Key = u64::MAX;

/// Serialized lower key preceding every node payload.
pub const LOWER_KEY_BYTES: u64 = 8;
/// One step piece: partition key + partition position.
pub const STEP_PIECE_BYTES: u64 = 16;
/// Band payload: x1, x2, y1, y2, δ.
pub const BAND_NODE_BYTES: u64 = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("key {0} is below the first node of the layer")]
    OutOfDomain(Key),
    #[error("invalid key-position set: {0}")]
    InvalidSet(String),
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
}

/// Half-open byte range `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct PositionRange {
    pub lo: u64,
    pub hi: u64,
}

impl PositionRange {
    pub const fn new(lo: u64, hi: u64) -> Self {
        PositionRange { lo, hi }
    }

    #[inline]
    pub fn len(&self) -> u64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    /// `self ⊇ other`.
    #[inline]
    pub fn covers(&self, other: &PositionRange) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

impl fmt::Display for PositionRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.lo, self.hi)
    }
}

/// Sorted `(key, byte range)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KeyPositionSet {
    keys: Vec<Key>,
    ranges: Vec<PositionRange>,
    /// Kind of the serialized layer whose entries these pairs are, if any.
    /// Queries then arrive for any key, not only the listed ones.
    entries_of: Option<NodeKind>,
}

impl KeyPositionSet {
    pub fn new(keys: Vec<Key>, ranges: Vec<PositionRange>) -> Result<Self, ModelError> {
        let bad = |m: String| Err(ModelError::InvalidSet(m));
        if keys.len() != ranges.len() {
            return bad(format!("{} keys but {} ranges", keys.len(), ranges.len()));
        }
        if let Some(i) = keys.windows(2).position(|w| w[0] >= w[1]) {
            return bad(format!("keys not strictly increasing at index {}", i + 1));
        }
        if keys.last() == Some(&MAX_KEY) {
            return bad("MAX_KEY is reserved".to_string());
        }
        if let Some(i) = ranges.iter().position(|r| r.lo > r.hi) {
            return bad(format!("range {i} has lo > hi"));
        }
        if let Some(i) = ranges.windows(2).position(|w| w[0].hi > w[1].lo) {
            return bad(format!("ranges overlap at index {}", i + 1));
        }
        Ok(KeyPositionSet { keys, ranges, entries_of: None })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Key, PositionRange)>) -> Result<Self, ModelError> {
        let (keys, ranges) = pairs.into_iter().unzip();
        Self::new(keys, ranges)
    }

    /// Caller guarantees the invariants.
    pub(crate) fn from_parts_unchecked(keys: Vec<Key>, ranges: Vec<PositionRange>) -> Self {
        debug_assert!(Self::new(keys.clone(), ranges.clone()).is_ok());
        KeyPositionSet { keys, ranges, entries_of: None }
    }

    pub fn entries_of(&self) -> Option<NodeKind> {
        self.entries_of
    }

    pub fn with_entries_of(mut self, kind: Option<NodeKind>) -> Self {
        self.entries_of = kind;
        self
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    pub fn ranges(&self) -> &[PositionRange] {
        &self.ranges
    }

    pub fn pair(&self, i: usize) -> (Key, PositionRange) {
        (self.keys[i], self.ranges[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Key, PositionRange)> + '_ {
        self.keys.iter().copied().zip(self.ranges.iter().copied())
    }

    /// `[y⁻ of first pair, y⁺ of last pair)`, or `[0, 0)` when empty.
    pub fn span(&self) -> PositionRange {
        match (self.ranges.first(), self.ranges.last()) {
            (Some(f), Some(l)) => PositionRange::new(f.lo, l.hi),
            _ => PositionRange::new(0, 0),
        }
    }

    /// `s_D`.
    pub fn total_extent(&self) -> u64 {
        self.span().len()
    }

    pub fn find(&self, key: Key) -> Option<usize> {
        self.keys.binary_search(&key).ok()
    }

    /// Pairs `start..end` as an independent set.
    pub fn slice(&self, start: usize, end: usize) -> KeyPositionSet {
        KeyPositionSet {
            keys: self.keys[start..end].to_vec(),
            ranges: self.ranges[start..end].to_vec(),
            entries_of: self.entries_of,
        }
    }
}

/// The bytes a node must fetch from the index layer underneath (of kind
/// `below`; `None` for the data layer), given its prediction `r`.
///
/// Band predictions are aligned outward to whole entries and widened by one
/// entry each side: a query key between two entry keys sees a line value
/// between theirs, so the extra entry keeps its routed entry covered. Over a
/// step layer the successor of the routed entry is also needed, because a
/// step node's last piece ends where the next node begins.
pub fn index_read(r: PositionRange, below: Option<NodeKind>, band: bool, bounds: PositionRange) -> PositionRange {
    let Some(kind) = below else { return r };
    let es = kind.entry_size();
    let pad_hi = u64::from(band || matches!(kind, NodeKind::Step { .. }));
    let lo = (r.lo / es).saturating_sub(u64::from(band)) * es;
    let hi = (r.hi.div_ceil(es) + pad_hi).saturating_mul(es);
    PositionRange::new(lo.max(bounds.lo).min(bounds.hi), hi.min(bounds.hi).max(bounds.lo))
}

/// `[b_i, b_{i+1})` for the piece containing `x`; the final real piece ends
/// at `upper`. Padding pieces carry `MAX_KEY` and are never routed to.
pub fn predict_step(keys: &[Key], positions: &[u64], upper: u64, x: Key) -> PositionRange {
    let i = keys.partition_point(|&k| k <= x).max(1) - 1;
    let lo = positions[i];
    let hi = if i + 1 < positions.len() {
        positions[i + 1]
    } else {
        upper
    };
    widen(lo, hi)
}

#[inline]
fn widen(lo: u64, hi: u64) -> PositionRange {
    if hi <= lo {
        PositionRange::new(lo, lo + 1)
    } else {
        PositionRange::new(lo, hi)
    }
}

/// A `p`-piece constant function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepNode {
    pub keys: Vec<Key>,
    pub positions: Vec<u64>,
}

impl StepNode {
    pub fn pieces(&self) -> usize {
        self.keys.len()
    }

    pub fn predict(&self, x: Key, upper: u64) -> PositionRange {
        predict_step(&self.keys, &self.positions, upper, x)
    }
}

/// A line through `(x1, y1)` and `(x2, y2)` thickened by `±delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandNode {
    pub x1: Key,
    pub y1: f64,
    pub x2: Key,
    pub y2: f64,
    pub delta: u64,
}

impl BandNode {
    /// `m·x + c`, evaluated relative to `x1` for precision on large keys.
    #[inline]
    pub fn center(&self, x: Key) -> f64 {
        if self.x2 == self.x1 {
            return self.y1;
        }
        let d = (x as i128 - self.x1 as i128) as f64;
        let span = (self.x2 as i128 - self.x1 as i128) as f64;
        self.y1 + (self.y2 - self.y1) * d / span
    }

    pub fn slope(&self) -> f64 {
        if self.x2 == self.x1 {
            return 0.0;
        }
        (self.y2 - self.y1) / (self.x2 as f64 - self.x1 as f64)
    }

    pub fn intercept(&self) -> f64 {
        self.y1 - self.slope() * self.x1 as f64
    }

    /// Prediction for a node over an index layer, where query keys fall
    /// between entry keys: keys past `x2` reuse the prediction at `x2`.
    /// Builders set `x2` to the node's last fitted key.
    pub fn predict_capped(&self, x: Key, bounds: PositionRange) -> PositionRange {
        self.predict(x.min(self.x2.max(self.x1)), bounds)
    }

    /// `[⌊c−δ⌋, ⌈c+δ⌉)` clamped into `bounds`; empty results widen to one byte.
    #[inline]
    pub fn predict(&self, x: Key, bounds: PositionRange) -> PositionRange {
        let c = self.center(x);
        let d = self.delta as f64;
        let lo = (c - d).floor().max(bounds.lo as f64);
        let hi = (c + d).ceil().min(bounds.hi as f64);
        let lo = if lo >= bounds.hi as f64 {
            bounds.hi.saturating_sub(1).max(bounds.lo)
        } else {
            lo as u64
        };
        let hi = if hi <= 0.0 { 0 } else { hi as u64 };
        widen(lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum NodeKind {
    Step { pieces: usize },
    Band,
}

impl NodeKind {
    /// Lower key plus payload.
    pub fn entry_size(&self) -> u64 {
        LOWER_KEY_BYTES + self.payload_size()
    }

    pub fn payload_size(&self) -> u64 {
        match self {
            NodeKind::Step { pieces } => STEP_PIECE_BYTES * *pieces as u64,
            NodeKind::Band => BAND_NODE_BYTES,
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::Step { pieces } => write!(f, "step(p={pieces})"),
            NodeKind::Band => write!(f, "band"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Step(StepNode),
    Band(BandNode),
}

/// Node storage for one layer; step pieces are kept flat, `pieces` per node.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerNodes {
    Step {
        pieces: usize,
        keys: Vec<Key>,
        positions: Vec<u64>,
    },
    Band(Vec<BandNode>),
}

/// One index layer `Θ_l`: nodes partitioning the key space, each predicting
/// a byte range inside `below`, the extent of the layer underneath.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDesign {
    lower_keys: Vec<Key>,
    nodes: LayerNodes,
    below: PositionRange,
    /// Kind of the layer underneath when it is an index layer.
    below_kind: Option<NodeKind>,
}

impl LayerDesign {
    pub fn new(
        lower_keys: Vec<Key>,
        nodes: LayerNodes,
        below: PositionRange,
    ) -> Result<Self, ModelError> {
        let bad = |m: String| Err(ModelError::InvalidLayer(m));
        let count = match &nodes {
            LayerNodes::Step {
                pieces,
                keys,
                positions,
            } => {
                if *pieces == 0 {
                    return bad("step nodes need at least one piece".into());
                }
                if keys.len() != positions.len() || keys.len() % pieces != 0 {
                    return bad("step piece arrays do not tile into nodes".into());
                }
                for node in keys.chunks(*pieces) {
                    if node.windows(2).any(|w| w[0] >= w[1] && w[0] != MAX_KEY) {
                        return bad("step partition keys must increase".into());
                    }
                }
                for node in positions.chunks(*pieces) {
                    if node.windows(2).any(|w| w[0] > w[1]) {
                        return bad("step partition positions must not decrease".into());
                    }
                }
                keys.len() / pieces
            }
            LayerNodes::Band(bands) => bands.len(),
        };
        if count != lower_keys.len() {
            return bad(format!("{} lower keys for {count} nodes", lower_keys.len()));
        }
        if lower_keys.windows(2).any(|w| w[0] >= w[1]) {
            return bad("lower keys must be strictly increasing".into());
        }
        Ok(LayerDesign {
            lower_keys,
            nodes,
            below,
            below_kind: None,
        })
    }

    pub(crate) fn new_unchecked(lower_keys: Vec<Key>, nodes: LayerNodes, below: PositionRange) -> Self {
        LayerDesign {
            lower_keys,
            nodes,
            below,
            below_kind: None,
        }
    }

    /// Builds a layer from owned nodes of a single kind.
    pub fn from_nodes(entries: Vec<(Key, Node)>, below: PositionRange) -> Result<Self, ModelError> {
        let lower_keys: Vec<Key> = entries.iter().map(|e| e.0).collect();
        let nodes = match entries.first() {
            None => LayerNodes::Band(Vec::new()),
            Some((_, Node::Band(_))) => LayerNodes::Band(
                entries
                    .into_iter()
                    .map(|(_, n)| match n {
                        Node::Band(b) => Ok(b),
                        Node::Step(_) => Err(ModelError::InvalidLayer("mixed node kinds".into())),
                    })
                    .collect::<Result<_, _>>()?,
            ),
            Some((_, Node::Step(first))) => {
                let pieces = first.pieces();
                let mut keys = Vec::with_capacity(pieces * entries.len());
                let mut positions = Vec::with_capacity(pieces * entries.len());
                for (_, n) in entries {
                    match n {
                        Node::Step(s) if s.pieces() == pieces => {
                            keys.extend(s.keys);
                            positions.extend(s.positions);
                        }
                        _ => {
                            return Err(ModelError::InvalidLayer(
                                "mixed node kinds or piece counts".into(),
                            ))
                        }
                    }
                }
                LayerNodes::Step {
                    pieces,
                    keys,
                    positions,
                }
            }
        };
        Self::new(lower_keys, nodes, below)
    }

    pub fn kind(&self) -> NodeKind {
        match &self.nodes {
            LayerNodes::Step { pieces, .. } => NodeKind::Step { pieces: *pieces },
            LayerNodes::Band(_) => NodeKind::Band,
        }
    }

    pub fn nodes(&self) -> &LayerNodes {
        &self.nodes
    }

    pub fn lower_keys(&self) -> &[Key] {
        &self.lower_keys
    }

    pub fn node_count(&self) -> usize {
        self.lower_keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower_keys.is_empty()
    }

    /// Extent of the layer this one points into.
    pub fn below(&self) -> PositionRange {
        self.below
    }

    pub fn entry_size(&self) -> u64 {
        self.kind().entry_size()
    }

    /// `s(Θ_l)`: bytes of the serialized layer.
    pub fn serialized_size(&self) -> u64 {
        self.entry_size() * self.node_count() as u64
    }

    pub fn node(&self, j: usize) -> Node {
        match &self.nodes {
            LayerNodes::Step {
                pieces,
                keys,
                positions,
            } => Node::Step(StepNode {
                keys: keys[j * pieces..(j + 1) * pieces].to_vec(),
                positions: positions[j * pieces..(j + 1) * pieces].to_vec(),
            }),
            LayerNodes::Band(b) => Node::Band(b[j]),
        }
    }

    /// Index of the node with the greatest lower key `≤ x`.
    pub fn route(&self, x: Key) -> Option<usize> {
        match self.lower_keys.partition_point(|&k| k <= x) {
            0 => None,
            n => Some(n - 1),
        }
    }

    /// Upper bound of the last real piece of step node `j`.
    fn step_upper(&self, j: usize) -> u64 {
        match &self.nodes {
            LayerNodes::Step {
                pieces, positions, ..
            } => positions
                .get((j + 1) * pieces)
                .copied()
                .unwrap_or(self.below.hi),
            LayerNodes::Band(_) => self.below.hi,
        }
    }

    #[inline]
    pub fn predict_node(&self, j: usize, x: Key) -> PositionRange {
        match &self.nodes {
            LayerNodes::Step {
                pieces,
                keys,
                positions,
            } => {
                let r = j * pieces..(j + 1) * pieces;
                let p = predict_step(&keys[r.clone()], &positions[r], self.step_upper(j), x);
                index_read(p, self.below_kind, false, self.below)
            }
            LayerNodes::Band(b) => match self.below_kind {
                None => b[j].predict(x, self.below),
                kind => index_read(b[j].predict_capped(x, self.below), kind, true, self.below),
            },
        }
    }

    pub fn predict(&self, x: Key) -> Result<PositionRange, ModelError> {
        let j = self.route(x).ok_or(ModelError::OutOfDomain(x))?;
        Ok(self.predict_node(j, x))
    }

    /// Predictions for ascending `keys`, routed by a forward-moving cursor.
    /// Keys below the first node are reported as `None`.
    pub fn predict_sorted(&self, keys: &[Key], mut f: impl FnMut(usize, Option<(usize, PositionRange)>)) {
        let Some(&first) = keys.first() else { return };
        let n = self.lower_keys.len();
        let mut j = self.route(first).unwrap_or_default();
        for (i, &x) in keys.iter().enumerate() {
            while j + 1 < n && self.lower_keys[j + 1] <= x {
                j += 1;
            }
            if n == 0 || self.lower_keys[j] > x {
                f(i, None);
            } else {
                f(i, Some((j, self.predict_node(j, x))));
            }
        }
    }

    pub fn below_kind(&self) -> Option<NodeKind> {
        self.below_kind
    }

    pub fn with_below_kind(mut self, kind: Option<NodeKind>) -> Self {
        self.below_kind = kind;
        self
    }

    /// Replaces the extent this layer points into.
    pub fn with_below(mut self, below: PositionRange) -> Self {
        self.below = below;
        self
    }
}

/// `𝚯 = (L, (Θ_1..Θ_L))`; `layers[0]` is closest to the data.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IndexDesign {
    pub layers: Vec<LayerDesign>,
}

impl IndexDesign {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Records on each layer the kind of the layer underneath.
    pub fn new(mut layers: Vec<LayerDesign>) -> Self {
        let kinds: Vec<NodeKind> = layers.iter().map(LayerDesign::kind).collect();
        for (i, layer) in layers.iter_mut().enumerate() {
            layer.below_kind = i.checked_sub(1).map(|b| kinds[b]);
        }
        IndexDesign { layers }
    }

    /// `L`.
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn root(&self) -> Option<&LayerDesign> {
        self.layers.last()
    }

    /// Bytes of the root layer, or `None` for `L = 0`.
    pub fn root_size(&self) -> Option<u64> {
        self.root().map(LayerDesign::serialized_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// 1-based layer index.
    pub layer: usize,
    pub key: Key,
    pub predicted: Option<PositionRange>,
    pub required: PositionRange,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.predicted {
            Some(p) => write!(
                f,
                "layer {} key {}: predicted {} does not cover {}",
                self.layer, self.key, p, self.required
            ),
            None => write!(
                f,
                "layer {} key {}: key outside routed domain, needs {}",
                self.layer, self.key, self.required
            ),
        }
    }
}

/// Every data key's prediction at every layer must cover what the layer
/// below needs: the pair's range for layer 1, the routed node's entry bytes
/// above that.
pub fn validate_design(design: &IndexDesign, data: &KeyPositionSet) -> Vec<Violation> {
    let mut out = Vec::new();
    for (idx, layer) in design.layers.iter().enumerate() {
        let level = idx + 1;
        let required: Vec<Option<PositionRange>> = if idx == 0 {
            data.ranges().iter().copied().map(Some).collect()
        } else {
            let lower = &design.layers[idx - 1];
            let es = lower.entry_size();
            let mut req = vec![None; data.len()];
            lower.predict_sorted(data.keys(), |i, hit| {
                req[i] = hit.map(|(j, _)| PositionRange::new(j as u64 * es, (j as u64 + 1) * es));
            });
            req
        };
        layer.predict_sorted(data.keys(), |i, hit| {
            let key = data.keys()[i];
            let Some(req) = required[i] else {
                // Reported at the lower layer already.
                return;
            };
            match hit {
                Some((_, p)) if p.covers(&req) => {}
                Some((_, p)) => out.push(Violation {
                    layer: level,
                    key,
                    predicted: Some(p),
                    required: req,
                }),
                None => out.push(Violation {
                    layer: level,
                    key,
                    predicted: None,
                    required: req,
                }),
            }
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn four_pairs() -> KeyPositionSet {
        KeyPositionSet::from_pairs([
            (1, PositionRange::new(0, 10)),
            (4, PositionRange::new(10, 20)),
            (5, PositionRange::new(20, 25)),
            (7, PositionRange::new(25, 35)),
        ])
        .unwrap()
    }

    fn example_step() -> StepNode {
        StepNode {
            keys: vec![1, 4, 5, 7, MAX_KEY],
            positions: vec![0, 10, 20, 25, 35],
        }
    }

    fn example_band(delta: u64) -> BandNode {
        BandNode {
            x1: 1,
            y1: 0.0,
            x2: 4,
            y2: 10.0,
            delta,
        }
    }

    #[test]
    fn step_prediction_examples() {
        let s = example_step();
        assert_eq!(s.predict(4, 35), PositionRange::new(10, 20));
        assert_eq!(s.predict(1, 35), PositionRange::new(0, 10));
        assert_eq!(s.predict(6, 35), PositionRange::new(20, 25));
        assert_eq!(s.predict(7, 35), PositionRange::new(25, 35));
    }

    #[test]
    fn band_prediction_examples() {
        let b = example_band(15);
        let bounds = PositionRange::new(0, 35);
        assert_eq!(b.predict(1, bounds), PositionRange::new(0, 15));
        assert_eq!(b.predict(7, bounds), PositionRange::new(5, 35));
        assert!((b.slope() - 10.0 / 3.0).abs() < 1e-12);
        assert!((b.intercept() + 10.0 / 3.0).abs() < 1e-12);
        assert_eq!(example_band(0).predict(1, bounds), PositionRange::new(0, 1));
    }

    #[test]
    fn index_reads_cover_neighbours() {
        let bounds = PositionRange::new(0, 480);
        let band = NodeKind::Band;
        let step = NodeKind::Step { pieces: 2 };
        // Band over band: whole entries plus one each side.
        assert_eq!(index_read(PositionRange::new(100, 130), Some(band), true, bounds), PositionRange::new(48, 192));
        // Step over step: exact pieces plus the successor entry.
        let es = step.entry_size();
        assert_eq!(index_read(PositionRange::new(es, 2 * es), Some(step), false, bounds), PositionRange::new(es, 3 * es));
        assert_eq!(index_read(PositionRange::new(48, 96), Some(band), false, bounds), PositionRange::new(48, 96));
        assert_eq!(index_read(PositionRange::new(0, 40), Some(band), true, bounds), PositionRange::new(0, 96));
        assert_eq!(index_read(PositionRange::new(450, 480), Some(band), true, bounds), PositionRange::new(384, 480));
        assert_eq!(index_read(PositionRange::new(3, 9), None, true, bounds), PositionRange::new(3, 9));
    }

    #[test]
    fn capped_band_stops_at_last_fitted_key() {
        let b = example_band(2);
        let bounds = PositionRange::new(0, 1000);
        assert_eq!(b.predict_capped(1_000_000, bounds), b.predict(4, bounds));
        assert_eq!(b.predict_capped(3, bounds), b.predict(3, bounds));
    }

    #[test]
    fn design_records_kind_below() {
        let data = four_pairs();
        let l1 = single_node_layer(Node::Band(example_band(15)), data.span());
        let l2 = single_node_layer(Node::Step(example_step()), PositionRange::new(0, 48));
        let d = IndexDesign::new(vec![l1, l2]);
        assert_eq!(d.layers[0].below_kind(), None);
        assert_eq!(d.layers[1].below_kind(), Some(NodeKind::Band));
    }

    #[test]
    fn band_clamps_into_bounds() {
        let b = example_band(15);
        let p = b.predict(100, PositionRange::new(0, 35));
        assert!(p.hi <= 35 && p.lo < p.hi);
    }

    #[test]
    fn set_invariants_enforced() {
        let r = PositionRange::new;
        assert!(KeyPositionSet::from_pairs([(2, r(0, 1)), (1, r(1, 2))]).is_err());
        assert!(KeyPositionSet::from_pairs([(1, r(0, 5)), (2, r(4, 8))]).is_err());
        assert!(KeyPositionSet::from_pairs([(1, r(3, 2))]).is_err());
        assert!(KeyPositionSet::from_pairs([(MAX_KEY, r(0, 1))]).is_err());
        let s = four_pairs();
        assert_eq!(s.total_extent(), 35);
        assert_eq!(s.find(5), Some(2));
        assert_eq!(s.find(6), None);
    }

    fn single_node_layer(node: Node, below: PositionRange) -> LayerDesign {
        LayerDesign::from_nodes(vec![(1, node)], below).unwrap()
    }

    #[test]
    fn single_node_layer_matches_node() {
        let below = PositionRange::new(0, 35);
        let layer = single_node_layer(Node::Step(example_step()), below);
        for x in 1..40 {
            assert_eq!(layer.predict(x).unwrap(), example_step().predict(x, 35));
        }
        assert_eq!(layer.predict(0), Err(ModelError::OutOfDomain(0)));
        let band = single_node_layer(Node::Band(example_band(15)), below);
        for x in 1..40 {
            assert_eq!(band.predict(x).unwrap(), example_band(15).predict(x, below));
        }
    }

    #[test]
    fn routing_is_half_open() {
        let layer = LayerDesign::new(
            vec![10, 20],
            LayerNodes::Step {
                pieces: 1,
                keys: vec![10, 20],
                positions: vec![0, 16],
            },
            PositionRange::new(0, 32),
        )
        .unwrap();
        assert_eq!(layer.route(19), Some(0));
        assert_eq!(layer.route(20), Some(1));
        assert_eq!(layer.predict(20).unwrap(), PositionRange::new(16, 32));
        assert_eq!(layer.predict(19).unwrap(), PositionRange::new(0, 16));
    }

    #[test]
    fn example_nodes_are_valid_over_example_set() {
        let data = four_pairs();
        let below = data.span();
        let step = IndexDesign::new(vec![single_node_layer(Node::Step(example_step()), below)]);
        assert!(validate_design(&step, &data).is_empty());
        let band = IndexDesign::new(vec![single_node_layer(Node::Band(example_band(15)), below)]);
        assert!(validate_design(&band, &data).is_empty());
        let thin = IndexDesign::new(vec![single_node_layer(Node::Band(example_band(0)), below)]);
        let v = validate_design(&thin, &data);
        assert!(v.iter().any(|v| v.key == 5 && v.required == PositionRange::new(20, 25)));
    }

    /// Two-layer balanced B-tree with fanout 3 over 27 data entries.
    #[test]
    fn btree_fixture_routes_leaf_keys() {
        let keys: Vec<Key> = (0..27).map(|i| 10 + 10 * i).collect();
        let data = KeyPositionSet::from_pairs(
            keys.iter()
                .enumerate()
                .map(|(i, &k)| (k, PositionRange::new(16 * i as u64, 16 * i as u64 + 16))),
        )
        .unwrap();
        let leaf = LayerDesign::new(
            (0..9).map(|j| keys[3 * j]).collect(),
            LayerNodes::Step {
                pieces: 3,
                keys: keys.clone(),
                positions: (0..27).map(|i| 16 * i).collect(),
            },
            data.span(),
        )
        .unwrap();
        let es = leaf.entry_size();
        assert_eq!(es, 56);
        let root = LayerDesign::new(
            (0..3).map(|j| keys[9 * j]).collect(),
            LayerNodes::Step {
                pieces: 3,
                keys: (0..9).map(|j| keys[3 * j]).collect(),
                positions: (0..9).map(|j| j * es).collect(),
            },
            PositionRange::new(0, 9 * es),
        )
        .unwrap();
        for leaf_idx in 0..9u64 {
            let k = keys[3 * leaf_idx as usize];
            assert_eq!(
                root.predict(k).unwrap(),
                PositionRange::new(leaf_idx * es, (leaf_idx + 1) * es)
            );
            assert_eq!(root.route(k), Some(leaf_idx as usize / 3));
        }
        let design = IndexDesign::new(vec![leaf, root]);
        assert!(validate_design(&design, &data).is_empty());
    }

    #[test]
    fn layer_rejects_malformed_input() {
        let below = PositionRange::new(0, 10);
        assert!(LayerDesign::new(
            vec![1],
            LayerNodes::Step {
                pieces: 2,
                keys: vec![1],
                positions: vec![0]
            },
            below
        )
        .is_err());
        assert!(LayerDesign::new(vec![2, 1], LayerNodes::Band(vec![example_band(1); 2]), below).is_err());
        assert!(LayerDesign::from_nodes(
            vec![(1, Node::Band(example_band(1))), (5, Node::Step(example_step()))],
            below
        )
        .is_err());
    }

    #[test]
    fn serialized_sizes() {
        assert_eq!(NodeKind::Step { pieces: 16 }.payload_size(), 256);
        assert_eq!(NodeKind::Step { pieces: 16 }.entry_size(), 264);
        assert_eq!(NodeKind::Band.payload_size(), 40);
        assert_eq!(NodeKind::Band.entry_size(), 48);
    }
}
