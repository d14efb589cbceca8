//! Layer builders: greedy step (GStep), greedy convex-hull band (GBand) and
//! equal-span least-squares band (EBand), plus the geometric builder grid.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    BandNode, Key, KeyPositionSet, LayerDesign, LayerNodes, PositionRange, MAX_KEY,
};
use crate::par::Exec;

/// Inputs larger than this are built in independent chunks.
pub const PARTITION_PAIRS: usize = 1_000_000;
/// Smallest granularity on a builder grid; single builders accept `λ ≥ 1`.
pub const MIN_LAMBDA: u64 = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuilderError {
    #[error("cannot build a layer over an empty collection")]
    EmptyInput,
    #[error("invalid builder: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum BuilderSpec {
    GStep { pieces: usize, lambda: u64 },
    GBand { lambda: u64 },
    EBand { lambda: u64 },
}

/// Work counters for one build.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub pairs: u64,
    pub touches: u64,
}

impl BuildStats {
    fn merge(self, o: BuildStats) -> BuildStats {
        BuildStats {
            pairs: self.pairs + o.pairs,
            touches: self.touches + o.touches,
        }
    }
}

impl BuilderSpec {
    pub fn lambda(&self) -> u64 {
        match *self {
            BuilderSpec::GStep { lambda, .. }
            | BuilderSpec::GBand { lambda }
            | BuilderSpec::EBand { lambda } => lambda,
        }
    }

    pub fn validate(&self) -> Result<(), BuilderError> {
        if self.lambda() == 0 {
            return Err(BuilderError::InvalidSpec("lambda must be positive".into()));
        }
        if let BuilderSpec::GStep { pieces: 0, .. } = self {
            return Err(BuilderError::InvalidSpec("step nodes need p >= 1".into()));
        }
        Ok(())
    }

    pub fn build(&self, data: &KeyPositionSet) -> Result<LayerDesign, BuilderError> {
        self.build_with(data, Exec::Sequential)
    }

    pub fn build_with(&self, data: &KeyPositionSet, exec: Exec) -> Result<LayerDesign, BuilderError> {
        self.build_with_stats(data, exec).map(|(layer, _)| layer)
    }

    /// Builds `PARTITION_PAIRS`-sized chunks independently and concatenates
    /// them in key order.
    pub fn build_with_stats(
        &self,
        data: &KeyPositionSet,
        exec: Exec,
    ) -> Result<(LayerDesign, BuildStats), BuilderError> {
        self.validate()?;
        if data.is_empty() {
            return Err(BuilderError::EmptyInput);
        }
        let below = data.span();
        let chunks: Vec<(usize, usize)> = (0..data.len())
            .step_by(PARTITION_PAIRS)
            .map(|s| (s, (s + PARTITION_PAIRS).min(data.len())))
            .collect();
        let parts = exec.map(&chunks, |&(s, e)| {
            let keys = &data.keys()[s..e];
            let ranges = &data.ranges()[s..e];
            let mut stats = BuildStats {
                pairs: (e - s) as u64,
                touches: 0,
            };
            let part = match *self {
                BuilderSpec::GStep { pieces, lambda } => {
                    gstep_chunk(keys, ranges, pieces, lambda, &mut stats)
                }
                BuilderSpec::GBand { lambda } => gband_chunk(keys, ranges, lambda, below, &mut stats),
                BuilderSpec::EBand { lambda } => eband_chunk(keys, ranges, lambda, below, &mut stats),
            };
            (part, stats)
        });
        let mut stats = BuildStats::default();
        let mut lower_keys = Vec::new();
        let nodes = match *self {
            BuilderSpec::GStep { pieces, .. } => {
                let (mut keys, mut positions) = (Vec::new(), Vec::new());
                for (part, s) in parts {
                    stats = stats.merge(s);
                    let Part::Step(p) = part else { unreachable!() };
                    lower_keys.extend(p.lower);
                    keys.extend(p.keys);
                    positions.extend(p.positions);
                }
                LayerNodes::Step {
                    pieces,
                    keys,
                    positions,
                }
            }
            _ => {
                let mut bands = Vec::new();
                for (part, s) in parts {
                    stats = stats.merge(s);
                    let Part::Band(lower, b) = part else { unreachable!() };
                    lower_keys.extend(lower);
                    bands.extend(b);
                }
                LayerNodes::Band(bands)
            }
        };
        let layer = LayerDesign::new_unchecked(lower_keys, nodes, below).with_below_kind(data.entries_of());
        Ok((layer, stats))
    }
}

impl fmt::Display for BuilderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuilderSpec::GStep { pieces, lambda } => write!(f, "gstep:{pieces}:{lambda}"),
            BuilderSpec::GBand { lambda } => write!(f, "gband:{lambda}"),
            BuilderSpec::EBand { lambda } => write!(f, "eband:{lambda}"),
        }
    }
}

impl FromStr for BuilderSpec {
    type Err = BuilderError;

    /// Parses `gstep:<p>:<lambda>`, `gband:<lambda>` or `eband:<lambda>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BuilderError::InvalidSpec(format!("cannot parse builder {s:?}"));
        let num = |t: &str| t.parse::<u64>().map_err(|_| bad());
        let parts: Vec<&str> = s.split(':').collect();
        let spec = match parts.as_slice() {
            ["gstep", p, l] => BuilderSpec::GStep {
                pieces: num(p)? as usize,
                lambda: num(l)?,
            },
            ["gband", l] => BuilderSpec::GBand { lambda: num(l)? },
            ["eband", l] => BuilderSpec::EBand { lambda: num(l)? },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn build_gstep(data: &KeyPositionSet, p: usize, lambda: u64) -> Result<LayerDesign, BuilderError> {
    BuilderSpec::GStep { pieces: p, lambda }.build(data)
}

pub fn build_gband(data: &KeyPositionSet, lambda: u64) -> Result<LayerDesign, BuilderError> {
    BuilderSpec::GBand { lambda }.build(data)
}

pub fn build_eband(data: &KeyPositionSet, lambda: u64) -> Result<LayerDesign, BuilderError> {
    BuilderSpec::EBand { lambda }.build(data)
}

enum Part {
    Step(StepPart),
    Band(Vec<Key>, Vec<BandNode>),
}

struct StepPart {
    lower: Vec<Key>,
    keys: Vec<Key>,
    positions: Vec<u64>,
}

/// A piece ends before pair `i` when `y⁺_i − b_k > λ`; every `p` pieces form
/// a node, the last one padded with `(MAX_KEY, y⁺ of the chunk)`.
fn gstep_chunk(
    keys: &[Key],
    ranges: &[PositionRange],
    p: usize,
    lambda: u64,
    stats: &mut BuildStats,
) -> Part {
    let mut piece_keys = vec![keys[0]];
    let mut piece_pos = vec![ranges[0].lo];
    let mut b = ranges[0].lo;
    for (&x, r) in keys.iter().zip(ranges).skip(1) {
        stats.touches += 1;
        if r.hi - b > lambda {
            piece_keys.push(x);
            piece_pos.push(r.lo);
            b = r.lo;
        }
    }
    stats.touches += 1;
    let end = ranges[ranges.len() - 1].hi;
    while piece_keys.len() % p != 0 {
        piece_keys.push(MAX_KEY);
        piece_pos.push(end);
    }
    Part::Step(StepPart {
        lower: piece_keys.iter().step_by(p).copied().collect(),
        keys: piece_keys,
        positions: piece_pos,
    })
}

/// Smallest `δ` for which `node` covers every pair, starting from the
/// largest observed deviation of the center.
fn fit_delta(
    node: &mut BandNode,
    keys: &[Key],
    ranges: &[PositionRange],
    below: PositionRange,
    stats: &mut BuildStats,
) {
    let mut dev: f64 = 0.0;
    for (&x, r) in keys.iter().zip(ranges) {
        let c = node.center(x);
        dev = dev.max(c - r.lo as f64).max(r.hi as f64 - c);
    }
    stats.touches += keys.len() as u64;
    node.delta = (dev - 1e-6).ceil().max(0.0) as u64;
    loop {
        stats.touches += keys.len() as u64;
        let bad = keys
            .iter()
            .zip(ranges)
            .any(|(&x, r)| !node.predict(x, below).covers(r));
        if !bad {
            return;
        }
        node.delta += 1;
    }
}

fn flat_band(x: Key, r: PositionRange) -> BandNode {
    let c = (r.lo as f64 + r.hi as f64) / 2.0;
    BandNode {
        x1: x,
        y1: c,
        x2: x,
        y2: c,
        delta: r.len().div_ceil(2),
    }
}

/// A band through `(x1, f(x1))` and `(x2, f(x2))` for `f(x) = a + s·(x − x1)`.
fn line_band(x1: Key, x2: Key, a: f64, s: f64) -> BandNode {
    BandNode {
        x1,
        y1: a,
        x2,
        y2: a + s * (x2 - x1) as f64,
        delta: 0,
    }
}

/// Groups while `y⁺_r − y⁻_l ≤ λ`; least squares on range midpoints.
fn eband_chunk(
    keys: &[Key],
    ranges: &[PositionRange],
    lambda: u64,
    below: PositionRange,
    stats: &mut BuildStats,
) -> Part {
    let mut lower = Vec::new();
    let mut bands = Vec::new();
    let mut l = 0;
    while l < keys.len() {
        let mut r = l + 1;
        while r < keys.len() && ranges[r].hi - ranges[l].lo <= lambda {
            r += 1;
        }
        stats.touches += (r - l) as u64;
        let (ks, rs) = (&keys[l..r], &ranges[l..r]);
        let mut node = if r - l == 1 {
            flat_band(ks[0], rs[0])
        } else {
            let n = ks.len() as f64;
            let xs = || ks.iter().map(|&k| (k - ks[0]) as f64);
            let ys = || rs.iter().map(|r| (r.lo as f64 + r.hi as f64) / 2.0);
            let mx = xs().sum::<f64>() / n;
            let my = ys().sum::<f64>() / n;
            let (sxy, sxx) = xs().zip(ys()).fold((0.0, 0.0), |(sxy, sxx), (x, y)| {
                (sxy + (x - mx) * (y - my), sxx + (x - mx) * (x - mx))
            });
            let s = if sxx > 0.0 { sxy / sxx } else { 0.0 };
            line_band(ks[0], ks[ks.len() - 1], my - s * mx, s)
        };
        stats.touches += (r - l) as u64;
        fit_delta(&mut node, ks, rs, below, stats);
        lower.push(ks[0]);
        bands.push(node);
        l = r;
    }
    Part::Band(lower, bands)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pt {
    x: i128,
    y: i128,
}

/// Direction `(dx, dy)` from `b` to `a`.
#[derive(Debug, Clone, Copy)]
struct Dir {
    dx: i128,
    dy: i128,
}

impl std::ops::Sub for Pt {
    type Output = Dir;
    fn sub(self, b: Pt) -> Dir {
        Dir {
            dx: self.x - b.x,
            dy: self.y - b.y,
        }
    }
}

impl Dir {
    /// Slope comparison; both `dx` share a sign.
    #[inline]
    fn lt(self, o: Dir) -> bool {
        self.dy * o.dx < o.dy * self.dx
    }

    #[inline]
    fn gt(self, o: Dir) -> bool {
        o.lt(self)
    }

    fn eq(self, o: Dir) -> bool {
        self.dy * o.dx == o.dy * self.dx
    }

    fn slope(self) -> f64 {
        self.dy as f64 / self.dx as f64
    }
}

#[inline]
fn cross(o: Pt, a: Pt, b: Pt) -> i128 {
    let (u, v) = (a - o, b - o);
    u.dx * v.dy - u.dy * v.dx
}

/// Streaming feasibility of a line through the vertical segments
/// `[y⁺_i − h, y⁻_i + h]`. Exact integer arithmetic; positions must stay
/// below 2⁶¹.
struct Corridor {
    h: i128,
    count: usize,
    first_x: i128,
    rect: [Pt; 4],
    upper: Vec<Pt>,
    lower: Vec<Pt>,
    upper_start: usize,
    lower_start: usize,
}

impl Corridor {
    fn new(h: u64) -> Self {
        let z = Pt { x: 0, y: 0 };
        Corridor {
            h: h as i128,
            count: 0,
            first_x: 0,
            rect: [z; 4],
            upper: Vec::new(),
            lower: Vec::new(),
            upper_start: 0,
            lower_start: 0,
        }
    }

    fn reset(&mut self) {
        self.count = 0;
    }

    /// Adds a segment; `false` leaves the state untouched apart from needing
    /// a reset. Requires `r.len() ≤ 2h` and increasing `x`.
    fn add(&mut self, x: Key, r: PositionRange, touches: &mut u64) -> bool {
        let x = x as i128;
        let p1 = Pt {
            x,
            y: r.lo as i128 + self.h,
        };
        let p2 = Pt {
            x,
            y: r.hi as i128 - self.h,
        };
        *touches += 1;
        match self.count {
            0 => {
                self.first_x = x;
                self.rect[0] = p1;
                self.rect[1] = p2;
                self.upper.clear();
                self.lower.clear();
                self.upper.push(p1);
                self.lower.push(p2);
                self.upper_start = 0;
                self.lower_start = 0;
                self.count = 1;
                return true;
            }
            1 => {
                self.rect[2] = p2;
                self.rect[3] = p1;
                self.upper.push(p1);
                self.lower.push(p2);
                self.count = 2;
                return true;
            }
            _ => {}
        }
        let slope1 = self.rect[2] - self.rect[0];
        let slope2 = self.rect[3] - self.rect[1];
        if (p1 - self.rect[2]).lt(slope1) || (p2 - self.rect[3]).gt(slope2) {
            return false;
        }
        if (p1 - self.rect[1]).lt(slope2) {
            let mut min = self.lower[self.lower_start] - p1;
            let mut min_i = self.lower_start;
            for i in self.lower_start + 1..self.lower.len() {
                *touches += 1;
                let v = self.lower[i] - p1;
                if v.gt(min) {
                    break;
                }
                min = v;
                min_i = i;
            }
            self.rect[1] = self.lower[min_i];
            self.rect[3] = p1;
            self.lower_start = min_i;
            let mut end = self.upper.len();
            while end >= self.upper_start + 2 && cross(self.upper[end - 2], self.upper[end - 1], p1) <= 0 {
                *touches += 1;
                end -= 1;
            }
            self.upper.truncate(end);
            self.upper.push(p1);
        }
        if (p2 - self.rect[0]).gt(slope1) {
            let mut max = self.upper[self.upper_start] - p2;
            let mut max_i = self.upper_start;
            for i in self.upper_start + 1..self.upper.len() {
                *touches += 1;
                let v = self.upper[i] - p2;
                if v.lt(max) {
                    break;
                }
                max = v;
                max_i = i;
            }
            self.rect[0] = self.upper[max_i];
            self.rect[2] = p2;
            self.upper_start = max_i;
            let mut end = self.lower.len();
            while end >= self.lower_start + 2 && cross(self.lower[end - 2], self.lower[end - 1], p2) >= 0 {
                *touches += 1;
                end -= 1;
            }
            self.lower.truncate(end);
            self.lower.push(p2);
        }
        self.count += 1;
        true
    }

    /// Witness line `(a, s)` with `f(x) = a + s·(x − first_x)`: through the
    /// crossing of the corridor diagonals with their mean slope.
    fn witness(&self) -> (f64, f64) {
        let [p0, p1, p2, p3] = self.rect;
        if self.count == 1 {
            return ((p0.y + p1.y) as f64 / 2.0, 0.0);
        }
        let slope1 = p2 - p0;
        let slope2 = p3 - p1;
        let (ix, iy) = if slope1.eq(slope2) {
            ((p0.x - self.first_x) as f64, p0.y as f64)
        } else {
            let a = slope1.dx * slope2.dy - slope1.dy * slope2.dx;
            let b = ((p1.x - p0.x) * (p3.y - p1.y) - (p1.y - p0.y) * (p3.x - p1.x)) as f64 / a as f64;
            (
                (p0.x - self.first_x) as f64 + b * slope1.dx as f64,
                p0.y as f64 + b * slope1.dy as f64,
            )
        };
        let s = (slope1.slope() + slope2.slope()) / 2.0;
        (iy - ix * s, s)
    }
}

/// Grows each band while some line stays within `λ/2` of every pair's full
/// range; pairs wider than `λ` become flat single-pair bands.
fn gband_chunk(
    keys: &[Key],
    ranges: &[PositionRange],
    lambda: u64,
    below: PositionRange,
    stats: &mut BuildStats,
) -> Part {
    let h = lambda / 2;
    let mut lower = Vec::new();
    let mut bands = Vec::new();
    let mut corridor = Corridor::new(h);
    let mut start = 0;

    let mut close = |s: usize, e: usize, c: &Corridor, stats: &mut BuildStats| {
        let (ks, rs) = (&keys[s..e], &ranges[s..e]);
        let mut node = if e - s == 1 {
            flat_band(ks[0], rs[0])
        } else {
            let (a, slope) = c.witness();
            line_band(ks[0], ks[ks.len() - 1], a, slope)
        };
        fit_delta(&mut node, ks, rs, below, stats);
        lower.push(ks[0]);
        bands.push(node);
    };

    for i in 0..keys.len() {
        if ranges[i].len() > 2 * h {
            if corridor.count > 0 {
                close(start, i, &corridor, stats);
            }
            corridor.reset();
            stats.touches += 1;
            close(i, i + 1, &corridor, stats);
            start = i + 1;
            continue;
        }
        if !corridor.add(keys[i], ranges[i], &mut stats.touches) {
            close(start, i, &corridor, stats);
            corridor.reset();
            start = i;
            corridor.add(keys[i], ranges[i], &mut stats.touches);
        }
    }
    if corridor.count > 0 {
        close(start, keys.len(), &corridor, stats);
    }
    Part::Band(lower, bands)
}

/// Turns a built layer into the collection the next layer up indexes: pair
/// `j` is node `j`'s lower key and its serialized entry bytes.
pub fn outline(layer: &LayerDesign) -> KeyPositionSet {
    let es = layer.entry_size();
    let keys = layer.lower_keys().to_vec();
    let ranges = (0..keys.len() as u64)
        .map(|j| PositionRange::new(j * es, (j + 1) * es))
        .collect();
    KeyPositionSet::from_parts_unchecked(keys, ranges).with_entries_of(Some(layer.kind()))
}

/// Builders over the grid `λ_low·base^i ≤ λ_high`: every GStep, then every
/// GBand, then every EBand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuilderSet {
    pub builders: Vec<BuilderSpec>,
    pub lambda_low: u64,
    pub lambda_high: u64,
    pub base: f64,
}

impl BuilderSet {
    pub fn len(&self) -> usize {
        self.builders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.builders.is_empty()
    }

    /// `λ_low = 2⁶`, `λ_high = 2²⁰`, base 2, `p = 16`: 45 builders.
    pub fn standard() -> Self {
        default_builder_set(1 << 6, 1 << 20, 2.0, 16).expect("valid defaults")
    }

    /// An explicit list; grid fields describe its lambda range.
    pub fn from_specs(builders: Vec<BuilderSpec>) -> Result<Self, BuilderError> {
        if builders.is_empty() {
            return Err(BuilderError::InvalidSpec("empty builder set".into()));
        }
        for b in &builders {
            b.validate()?;
        }
        let lambda_low = builders.iter().map(BuilderSpec::lambda).min().unwrap_or(MIN_LAMBDA);
        let lambda_high = builders.iter().map(BuilderSpec::lambda).max().unwrap_or(MIN_LAMBDA);
        Ok(BuilderSet {
            builders,
            lambda_low,
            lambda_high,
            base: 2.0,
        })
    }
}

pub fn lambda_grid(lambda_low: u64, lambda_high: u64, base: f64) -> Result<Vec<u64>, BuilderError> {
    if !(base > 1.0 && base.is_finite()) {
        return Err(BuilderError::InvalidSpec(format!("base {base} must exceed 1")));
    }
    if lambda_low < MIN_LAMBDA || lambda_low > lambda_high {
        return Err(BuilderError::InvalidSpec(format!(
            "need {MIN_LAMBDA} <= lambda_low <= lambda_high, got {lambda_low}..{lambda_high}"
        )));
    }
    let mut grid: Vec<u64> = Vec::new();
    let limit = lambda_high as f64 * (1.0 + 1e-12);
    let mut i = 0;
    loop {
        let v = lambda_low as f64 * base.powi(i);
        if v > limit {
            break;
        }
        let l = (v.round() as u64).min(lambda_high);
        if grid.last() != Some(&l) {
            grid.push(l);
        }
        i += 1;
    }
    Ok(grid)
}

pub fn default_builder_set(
    lambda_low: u64,
    lambda_high: u64,
    base: f64,
    p: usize,
) -> Result<BuilderSet, BuilderError> {
    if p == 0 {
        return Err(BuilderError::InvalidSpec("step nodes need p >= 1".into()));
    }
    let grid = lambda_grid(lambda_low, lambda_high, base)?;
    let mut builders: Vec<BuilderSpec> = grid
        .iter()
        .map(|&lambda| BuilderSpec::GStep { pieces: p, lambda })
        .collect();
    builders.extend(grid.iter().map(|&lambda| BuilderSpec::GBand { lambda }));
    builders.extend(grid.iter().map(|&lambda| BuilderSpec::EBand { lambda }));
    Ok(BuilderSet {
        builders,
        lambda_low,
        lambda_high,
        base,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_design, IndexDesign, LayerNodes, Node};

    fn uniform(n: u64, size: u64) -> KeyPositionSet {
        KeyPositionSet::from_pairs((0..n).map(|i| (3 * i + 1, PositionRange::new(size * i, size * (i + 1))))).unwrap()
    }

    fn four_pairs() -> KeyPositionSet {
        KeyPositionSet::from_pairs([
            (1, PositionRange::new(0, 10)),
            (4, PositionRange::new(10, 20)),
            (5, PositionRange::new(20, 25)),
            (7, PositionRange::new(25, 35)),
        ])
        .unwrap()
    }

    fn assert_valid(layer: &LayerDesign, data: &KeyPositionSet) {
        let v = validate_design(&IndexDesign::new(vec![layer.clone()]), data);
        assert!(v.is_empty(), "{}", v[0]);
    }

    #[test]
    fn gstep_four_pair_example() {
        let layer = build_gstep(&four_pairs(), 5, 1).unwrap();
        assert_eq!(layer.node_count(), 1);
        let LayerNodes::Step { keys, positions, .. } = layer.nodes() else { panic!() };
        assert_eq!(keys, &vec![1, 4, 5, 7, MAX_KEY]);
        assert_eq!(positions, &vec![0, 10, 20, 25, 35]);
        assert_valid(&layer, &four_pairs());
    }

    #[test]
    fn gstep_uniform_pieces() {
        let data = uniform(32, 16);
        let layer = build_gstep(&data, 4, 64).unwrap();
        let LayerNodes::Step { keys, .. } = layer.nodes() else { panic!() };
        assert_eq!(keys.len(), 8);
        assert_eq!(layer.node_count(), 2);
        for n in [1u64, 15, 16, 17, 100] {
            let d = uniform(n, 16);
            assert_eq!(build_gstep(&d, 4, 64).unwrap().node_count() as u64, n.div_ceil(16));
        }
        for x in data.keys() {
            assert_eq!(layer.predict(*x).unwrap().len(), 64);
        }
    }

    #[test]
    fn gstep_huge_lambda_single_piece() {
        let data = uniform(100, 16);
        let layer = build_gstep(&data, 1, 1 << 20).unwrap();
        assert_eq!(layer.node_count(), 1);
        assert_eq!(layer.predict(4).unwrap().len(), 1600);
    }

    #[test]
    fn gband_linear_single_node() {
        for lambda in [16, 17, 64, 4096] {
            let data = KeyPositionSet::from_pairs((0..500u64).map(|i| (i, PositionRange::new(16 * i, 16 * i + 16)))).unwrap();
            let layer = build_gband(&data, lambda).unwrap();
            assert_eq!(layer.node_count(), 1, "lambda {lambda}");
            let LayerNodes::Band(b) = layer.nodes() else { panic!() };
            assert!(b[0].delta <= 8);
            assert_valid(&layer, &data);
        }
    }

    #[test]
    fn gband_four_pairs_fit_one_band() {
        let layer = build_gband(&four_pairs(), 30).unwrap();
        assert_eq!(layer.node_count(), 1);
        assert_valid(&layer, &four_pairs());
    }

    #[test]
    fn gband_jump_splits() {
        // Any two segments admit a line; the jump needs a third pair.
        let data = KeyPositionSet::from_pairs([
            (10, PositionRange::new(0, 16)),
            (11, PositionRange::new(16, 32)),
            (12, PositionRange::new(1_000_000, 1_000_016)),
        ])
        .unwrap();
        let layer = build_gband(&data, 64).unwrap();
        assert_eq!(layer.node_count(), 2);
        assert_valid(&layer, &data);
    }

    #[test]
    fn wide_pairs_become_flat_bands() {
        let data = KeyPositionSet::from_pairs([
            (1, PositionRange::new(0, 16)),
            (2, PositionRange::new(16, 32)),
            (3, PositionRange::new(32, 1032)),
            (4, PositionRange::new(1032, 1048)),
        ])
        .unwrap();
        for layer in [build_gband(&data, 64).unwrap(), build_eband(&data, 64).unwrap()] {
            assert_eq!(layer.node_count(), 3);
            let Node::Band(b) = layer.node(1) else { panic!() };
            assert_eq!((b.x1, b.delta), (3, 500));
            assert_valid(&layer, &data);
        }
    }

    #[test]
    fn eband_groups_by_span() {
        let data = uniform(40, 16);
        let layer = build_eband(&data, 64).unwrap();
        assert_eq!(layer.node_count(), 10);
        let LayerNodes::Band(b) = layer.nodes() else { panic!() };
        assert!(b.iter().all(|b| b.delta == 8));
        assert_valid(&layer, &data);
        let single = uniform(1, 16);
        let LayerNodes::Band(b) = build_eband(&single, 64).unwrap().nodes().clone() else { panic!() };
        assert_eq!(b[0].delta, 8);
    }

    #[test]
    fn outline_sizes() {
        let data = uniform(12, 16);
        let bands = build_eband(&data, 64).unwrap();
        let o = outline(&bands);
        assert_eq!(o.ranges(), &[PositionRange::new(0, 48), PositionRange::new(48, 96), PositionRange::new(96, 144)]);
        assert_eq!(o.total_extent(), bands.serialized_size());
        let step = build_gstep(&data, 16, 64).unwrap();
        assert_eq!(outline(&step).ranges(), &[PositionRange::new(0, 264)]);
    }

    #[test]
    fn builder_set_sizes() {
        assert_eq!(default_builder_set(1 << 8, 1 << 20, 2.0, 16).unwrap().len(), 39);
        assert_eq!(default_builder_set(1 << 6, 1 << 20, 2.0, 16).unwrap().len(), 45);
        assert_eq!(default_builder_set(1 << 10, 1 << 10, 2.0, 16).unwrap().len(), 3);
        let set = BuilderSet::standard();
        assert_eq!(set.builders[0], BuilderSpec::GStep { pieces: 16, lambda: 64 });
        assert_eq!(set.builders[15], BuilderSpec::GBand { lambda: 64 });
        assert_eq!(set.builders[44], BuilderSpec::EBand { lambda: 1 << 20 });
        assert!(default_builder_set(8, 64, 2.0, 16).is_err());
        assert!(default_builder_set(64, 32, 2.0, 16).is_err());
        assert!(default_builder_set(64, 128, 1.0, 16).is_err());
    }

    #[test]
    fn spec_text_round_trip() {
        for s in BuilderSet::standard().builders {
            assert_eq!(s.to_string().parse::<BuilderSpec>().unwrap(), s);
        }
        assert!("gstep:0:64".parse::<BuilderSpec>().is_err());
        assert!("bogus".parse::<BuilderSpec>().is_err());
    }

    #[test]
    fn empty_input_rejected() {
        assert_eq!(build_gband(&KeyPositionSet::default(), 64), Err(BuilderError::EmptyInput));
    }
}
