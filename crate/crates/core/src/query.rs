//! Point lookups over a built index, reading through an optional FIFO page
//! cache.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use serde::Serialize;
use thiserror::Error;

use crate::format::{decode_entry, entry_lower_key, step_first_position, BuiltIndex, FormatError, DATA_ENTRY_SIZE};
use crate::model::{index_read, predict_step, Key, Node, NodeKind, PositionRange};
use crate::storage::{Backend, ByteRange, ResourceId, StorageError, StorageProfile};

pub const DEFAULT_PAGE_SIZE: u64 = 4096;

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("key {0} not found")]
    NotFound(Key),
    #[error("corrupt layer {level}: {reason}")]
    Corrupt { level: usize, reason: String },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

type PageKey = (ResourceId, u64);

#[derive(Default)]
struct CacheState {
    pages: HashMap<PageKey, Arc<Vec<u8>>>,
    order: VecDeque<PageKey>,
}

/// Fixed-size pages evicted in insertion order. Capacity 0 bypasses the
/// cache entirely: every read goes to the backend as issued.
pub struct PageCache {
    page_size: u64,
    capacity: usize,
    state: Mutex<CacheState>,
}

/// Bytes served by [`PageCache::read_through`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadThrough {
    pub bytes: Vec<u8>,
    pub pages_missed: usize,
    /// Backend reads issued, after coalescing adjacent missing pages.
    pub backend_reads: Vec<ByteRange>,
}

impl PageCache {
    pub fn new(page_size: u64, capacity: usize) -> Self {
        assert!(page_size > 0, "page size must be positive");
        PageCache {
            page_size,
            capacity,
            state: Mutex::new(CacheState::default()),
        }
    }

    /// Cold mode.
    pub fn disabled() -> Self {
        Self::new(DEFAULT_PAGE_SIZE, 0)
    }

    pub fn page_size(&self) -> u64 {
        self.page_size
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_enabled(&self) -> bool {
        self.capacity > 0
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, resource: &ResourceId, page: u64) -> bool {
        self.state.lock().unwrap().pages.contains_key(&(resource.clone(), page))
    }

    pub fn clear(&self) {
        *self.state.lock().unwrap() = CacheState::default();
    }

    /// Serves `range` from cached pages, fetching each run of missing pages
    /// with one backend read and inserting them FIFO.
    pub fn read_through(
        &self,
        backend: &dyn Backend,
        resource: &ResourceId,
        range: ByteRange,
    ) -> Result<ReadThrough, StorageError> {
        if range.length == 0 {
            return Ok(ReadThrough {
                bytes: Vec::new(),
                pages_missed: 0,
                backend_reads: Vec::new(),
            });
        }
        if !self.is_enabled() {
            let bytes = backend.read(resource, range)?;
            return Ok(ReadThrough {
                bytes,
                pages_missed: 0,
                backend_reads: vec![range],
            });
        }
        let ps = self.page_size;
        let first = range.offset / ps;
        let last = (range.end() - 1) / ps;
        let mut have: Vec<Option<Arc<Vec<u8>>>> = {
            let st = self.state.lock().unwrap();
            (first..=last)
                .map(|p| st.pages.get(&(resource.clone(), p)).cloned())
                .collect()
        };
        let mut backend_reads = Vec::new();
        let mut fetched: Vec<(u64, Arc<Vec<u8>>)> = Vec::new();
        let mut i = 0;
        while i < have.len() {
            if have[i].is_some() {
                i += 1;
                continue;
            }
            let start = i;
            while i < have.len() && have[i].is_none() {
                i += 1;
            }
            let read = ByteRange::new((first + start as u64) * ps, (i - start) as u64 * ps);
            let bytes = backend.read(resource, read)?;
            backend_reads.push(ByteRange::new(read.offset, bytes.len() as u64));
            for (k, chunk) in bytes.chunks(ps as usize).enumerate() {
                let page = Arc::new(chunk.to_vec());
                have[start + k] = Some(page.clone());
                fetched.push((first + (start + k) as u64, page));
            }
            if have[start..i].iter().any(Option::is_none) {
                return Err(StorageError::OffsetBeyondExtent {
                    offset: range.end(),
                    extent: read.offset + bytes.len() as u64,
                });
            }
        }
        let pages_missed = fetched.len();
        if !fetched.is_empty() {
            let mut st = self.state.lock().unwrap();
            for (p, page) in fetched {
                let key = (resource.clone(), p);
                if st.pages.insert(key.clone(), page).is_none() {
                    st.order.push_back(key);
                }
            }
            while st.order.len() > self.capacity {
                if let Some(old) = st.order.pop_front() {
                    st.pages.remove(&old);
                }
            }
        }
        let mut bytes = Vec::with_capacity(range.length as usize);
        for (k, page) in have.iter().enumerate() {
            let page = page.as_deref().expect("every page filled");
            let base = (first + k as u64) * ps;
            let lo = range.offset.max(base) - base;
            let hi = (range.end().min(base + ps) - base).min(page.len() as u64);
            if lo < hi {
                bytes.extend_from_slice(&page[lo as usize..hi as usize]);
            }
        }
        Ok(ReadThrough {
            bytes,
            pages_missed,
            backend_reads,
        })
    }
}

/// One storage access of a lookup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    /// Layer read: `L` for the root down to 0 for the data layer.
    pub level: usize,
    pub offset: u64,
    pub length: u64,
    pub cache_hit: bool,
    /// Sizes of the backend reads actually issued.
    pub issued: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LookupResult {
    pub key: Key,
    pub value: u64,
    /// Root first; `L + 1` steps.
    pub trace: Vec<TraceStep>,
}

/// `Σ T(issued read)` over the trace.
pub fn modeled_trace_cost(result: &LookupResult, profile: &StorageProfile) -> f64 {
    result
        .trace
        .iter()
        .flat_map(|s| s.issued.iter())
        .fold(0.0, |acc, &d| acc + profile.cost_bytes(d))
}

/// Last entry whose lower key is `≤ x`.
fn route_in(bytes: &[u8], es: u64, x: Key) -> Option<usize> {
    let n = bytes.len() / es as usize;
    let (mut lo, mut hi) = (0usize, n);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if entry_lower_key(bytes, es, mid) <= x {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo.checked_sub(1)
}

/// Outward to entry boundaries within `[0, extent)`.
fn align(r: PositionRange, es: u64, extent: u64) -> (u64, u64) {
    let lo = r.lo / es * es;
    let hi = r.hi.div_ceil(es).saturating_mul(es).min(extent / es * es);
    (lo.min(hi), hi)
}

/// Walks from the root to the data layer for `x`.
pub fn lookup(
    index: &BuiltIndex,
    x: Key,
    cache: &PageCache,
    backend: &dyn Backend,
) -> Result<LookupResult, QueryError> {
    let layers = index.num_layers();
    let mut trace = Vec::with_capacity(layers + 1);
    let corrupt = |level: usize, reason: &str| QueryError::Corrupt {
        level,
        reason: reason.to_string(),
    };

    // Current read, in layer coordinates: [lo, hi) of level `level`.
    let (mut lo, mut hi) = if layers == 0 {
        let es = DATA_ENTRY_SIZE as u64;
        (0, index.data_extent / es * es)
    } else {
        (0, index.layer_extent(layers))
    };
    for level in (0..=layers).rev() {
        let (resource, base) = index.location(level);
        let read = ByteRange::new(base + lo, hi - lo);
        let got = cache.read_through(backend, &resource, read)?;
        trace.push(TraceStep {
            level,
            offset: read.offset,
            length: read.length,
            cache_hit: cache.is_enabled() && got.pages_missed == 0,
            issued: got.backend_reads.iter().map(|r| r.length).collect(),
        });
        let bytes = got.bytes;
        if bytes.len() as u64 != read.length {
            return Err(corrupt(level, "short read"));
        }

        if level == 0 {
            let es = DATA_ENTRY_SIZE as u64;
            let n = bytes.len() / es as usize;
            let (mut a, mut b) = (0usize, n);
            while a < b {
                let mid = (a + b) / 2;
                if entry_lower_key(&bytes, es, mid) < x {
                    a = mid + 1;
                } else {
                    b = mid;
                }
            }
            if a < n && entry_lower_key(&bytes, es, a) == x {
                let at = a * es as usize + 8;
                let value = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
                return Ok(LookupResult { key: x, value, trace });
            }
            return Err(QueryError::NotFound(x));
        }

        let kind = index.metadata.layers[level - 1].kind;
        let es = kind.entry_size();
        let Some(j) = route_in(&bytes, es, x) else {
            if lo == 0 {
                return Err(QueryError::NotFound(x));
            }
            return Err(corrupt(level, "read range starts after the routed node"));
        };
        let entries = bytes.len() / es as usize;
        let is_last = j + 1 == entries;
        if is_last && matches!(kind, NodeKind::Step { .. }) && hi < index.layer_extent(level) {
            return Err(corrupt(level, "read range ends before the routed node's successor"));
        }
        let below_extent = index.layer_extent(level - 1);
        let below = PositionRange::new(0, below_extent);
        let below_kind = (level > 1).then(|| index.metadata.layers[level - 2].kind);
        let entry = &bytes[j * es as usize..(j + 1) * es as usize];
        let predicted = match decode_entry(entry, kind)?.1 {
            Node::Step(s) => {
                let upper = if is_last {
                    below.hi
                } else {
                    step_first_position(&bytes[(j + 1) * es as usize..])
                };
                index_read(predict_step(&s.keys, &s.positions, upper, x), below_kind, false, below)
            }
            Node::Band(b) => match below_kind {
                None => b.predict(x, below),
                kind => index_read(b.predict_capped(x, below), kind, true, below),
            },
        };
        let below_entry = below_kind.map_or(DATA_ENTRY_SIZE as u64, |k| k.entry_size());
        (lo, hi) = align(predicted, below_entry, below_extent);
        if lo >= hi {
            return Err(corrupt(level, "empty prediction"));
        }
    }
    unreachable!("the data layer always returns")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::build_gstep;
    use crate::format::{build_index, encode_rank_data};
    use crate::model::{BandNode, IndexDesign, KeyPositionSet, LayerDesign};
    use crate::storage::MemBackend;

    fn page_backend() -> (MemBackend, ResourceId) {
        let be = MemBackend::new();
        let id = ResourceId::mem("obj");
        be.write(&id, &(0..40_000u32).map(|i| i as u8).collect::<Vec<_>>()).unwrap();
        (be, id)
    }

    #[test]
    fn cold_two_page_read_coalesces() {
        let (be, id) = page_backend();
        let cache = PageCache::new(4096, 16);
        let r = cache.read_through(&be, &id, ByteRange::new(4000, 200)).unwrap();
        assert_eq!(r.pages_missed, 2);
        assert_eq!(r.backend_reads, vec![ByteRange::new(0, 8192)]);
        assert_eq!(r.bytes, (4000..4200u32).map(|i| i as u8).collect::<Vec<_>>());
        let again = cache.read_through(&be, &id, ByteRange::new(4000, 200)).unwrap();
        assert_eq!((again.pages_missed, again.backend_reads.len()), (0, 0));
        assert_eq!(again.bytes, r.bytes);
    }

    #[test]
    fn fifo_thrash_with_capacity_one() {
        let (be, id) = page_backend();
        let cache = PageCache::new(4096, 1);
        for off in [0u64, 4096, 0, 4096] {
            let r = cache.read_through(&be, &id, ByteRange::new(off, 10)).unwrap();
            assert_eq!(r.pages_missed, 1);
            assert!(cache.len() <= 1);
        }
    }

    #[test]
    fn fifo_evicts_oldest_not_most_used() {
        let (be, id) = page_backend();
        let cache = PageCache::new(4096, 2);
        for off in [0u64, 4096, 0, 8192] {
            cache.read_through(&be, &id, ByteRange::new(off, 1)).unwrap();
        }
        assert!(!cache.contains(&id, 0));
        assert!(cache.contains(&id, 1) && cache.contains(&id, 2));
    }

    #[test]
    fn partial_tail_page() {
        let (be, id) = page_backend();
        let cache = PageCache::new(4096, 64);
        let r = cache.read_through(&be, &id, ByteRange::new(39_990, 10)).unwrap();
        assert_eq!(r.bytes.len(), 10);
        assert_eq!(r.backend_reads, vec![ByteRange::new(36_864, 3136)]);
    }

    fn four_key_index(be: &MemBackend) -> BuiltIndex {
        let keys = [1u64, 4, 5, 7];
        let data = ResourceId::mem("data");
        be.write(&data, &encode_rank_data(&keys).unwrap()).unwrap();
        let set = KeyPositionSet::from_pairs(keys.iter().enumerate().map(|(i, &k)| {
            (k, PositionRange::new(16 * i as u64, 16 * i as u64 + 16))
        }))
        .unwrap();
        let layer = LayerDesign::from_nodes(
            vec![(
                1,
                Node::Band(BandNode {
                    x1: 1,
                    y1: 0.0,
                    x2: 7,
                    y2: 48.0,
                    delta: 16,
                }),
            )],
            set.span(),
        )
        .unwrap();
        build_index(&IndexDesign::new(vec![layer]), &data, &ResourceId::mem("idx"), be).unwrap()
    }

    #[test]
    fn rank_lookup_on_small_index() {
        let be = MemBackend::new();
        let idx = four_key_index(&be);
        let cache = PageCache::disabled();
        let r = lookup(&idx, 5, &cache, &be).unwrap();
        assert_eq!(r.value, 2);
        assert_eq!(r.trace.len(), 2);
        assert_eq!(lookup(&idx, 1, &cache, &be).unwrap().value, 0);
        assert!(matches!(lookup(&idx, 6, &cache, &be), Err(QueryError::NotFound(6))));
        assert!(matches!(lookup(&idx, 0, &cache, &be), Err(QueryError::NotFound(0))));
        let p = StorageProfile::ssd();
        let want = p.cost_bytes(48) + p.cost_bytes(r.trace[1].length);
        assert_eq!(modeled_trace_cost(&r, &p), want);
    }

    #[test]
    fn warm_lookup_costs_nothing() {
        let be = MemBackend::new();
        let idx = four_key_index(&be);
        let cache = PageCache::new(4096, 8);
        lookup(&idx, 7, &cache, &be).unwrap();
        let warm = lookup(&idx, 7, &cache, &be).unwrap();
        assert!(warm.trace.iter().all(|s| s.cache_hit));
        assert_eq!(modeled_trace_cost(&warm, &StorageProfile::nfs()), 0.0);
    }

    #[test]
    fn two_layer_step_index() {
        let n = 5000u64;
        let keys: Vec<Key> = (0..n).map(|i| i * i + 3).collect();
        let be = MemBackend::new();
        let data = ResourceId::mem("d");
        be.write(&data, &encode_rank_data(&keys).unwrap()).unwrap();
        let set = KeyPositionSet::from_pairs(keys.iter().enumerate().map(|(i, &k)| {
            (k, PositionRange::new(16 * i as u64, 16 * i as u64 + 16))
        }))
        .unwrap();
        let l1 = build_gstep(&set, 4, 128).unwrap();
        let l2 = build_gstep(&crate::builders::outline(&l1), 4, 512).unwrap();
        let idx = build_index(&IndexDesign::new(vec![l1, l2]), &data, &ResourceId::mem("i"), &be).unwrap();
        let cache = PageCache::disabled();
        for (i, &k) in keys.iter().enumerate() {
            let r = lookup(&idx, k, &cache, &be).unwrap();
            assert_eq!(r.value, i as u64);
            assert_eq!(r.trace.len(), 3);
        }
        assert!(matches!(lookup(&idx, 5, &cache, &be), Err(QueryError::NotFound(5))));
    }
}
