//! Byte-range storage backends and their read-cost profiles.
//!
//! A [`StorageProfile`] is the monotone function `T(Δ)` giving the expected
//! time to read `Δ` consecutive bytes. Backends serve partial range reads
//! addressed by a [`ResourceId`].

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{self, Read, Seek, SeekFrom};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Slope floor for fitted profiles, in seconds per byte.
pub const MIN_SLOPE: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("resource not found: {0}")]
    NotFound(String),
    #[error("offset {offset} beyond extent {extent}")]
    OffsetBeyondExtent { offset: u64, extent: u64 },
    #[error("invalid resource id: {0}")]
    InvalidResource(String),
    #[error("invalid storage profile: {0}")]
    InvalidProfile(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, StorageError>;

/// Expected read latency as a function of read size.
#[derive(Debug, Clone, PartialEq)]
pub enum StorageProfile {
    /// `ℓ + Δ/B`.
    Affine { latency: f64, bandwidth: f64 },
    /// Affine profile whose latency is uniform on `[ℓ0, ℓ1]` and whose
    /// bandwidth is uniform on `[B0, B1]`, averaged.
    AffineUniform {
        latency0: f64,
        latency1: f64,
        bandwidth0: f64,
        bandwidth1: f64,
    },
    /// Measured `(Δ, seconds)` samples, linearly interpolated and clamped.
    Table { samples: Vec<(f64, f64)> },
}

impl StorageProfile {
    pub fn affine(latency: f64, bandwidth: f64) -> Result<Self> {
        let p = StorageProfile::Affine { latency, bandwidth };
        p.validate()?;
        Ok(p)
    }

    pub fn affine_uniform(
        latency0: f64,
        latency1: f64,
        bandwidth0: f64,
        bandwidth1: f64,
    ) -> Result<Self> {
        let p = StorageProfile::AffineUniform {
            latency0,
            latency1,
            bandwidth0,
            bandwidth1,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn table(samples: Vec<(f64, f64)>) -> Result<Self> {
        let p = StorageProfile::Table { samples };
        p.validate()?;
        Ok(p)
    }

    /// Network file system preset: 50 ms, 12 MB/s.
    pub fn nfs() -> Self {
        StorageProfile::Affine {
            latency: 50e-3,
            bandwidth: 12e6,
        }
    }

    /// Local SSD preset: 250 µs, 175 MB/s.
    pub fn ssd() -> Self {
        StorageProfile::Affine {
            latency: 250e-6,
            bandwidth: 175e6,
        }
    }

    /// Estimated cloud HDD preset: 8 ms, 60 MB/s.
    pub fn hdd() -> Self {
        StorageProfile::Affine {
            latency: 8e-3,
            bandwidth: 60e6,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "nfs" => Some(Self::nfs()),
            "ssd" => Some(Self::ssd()),
            "hdd" => Some(Self::hdd()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(StorageError::InvalidProfile(msg.to_string()));
        match self {
            StorageProfile::Affine { latency, bandwidth } => {
                if !(latency.is_finite() && *latency >= 0.0) {
                    return bad("latency must be finite and >= 0");
                }
                if bandwidth.is_nan() || *bandwidth <= 0.0 {
                    return bad("bandwidth must be > 0");
                }
            }
            StorageProfile::AffineUniform {
                latency0,
                latency1,
                bandwidth0,
                bandwidth1,
            } => {
                if !(*latency0 >= 0.0 && latency0 <= latency1 && latency1.is_finite()) {
                    return bad("need 0 <= latency0 <= latency1");
                }
                if !(*bandwidth0 > 0.0 && bandwidth0 <= bandwidth1) {
                    return bad("need 0 < bandwidth0 <= bandwidth1");
                }
            }
            StorageProfile::Table { samples } => {
                if samples.is_empty() {
                    return bad("table needs at least one sample");
                }
                if samples.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return bad("table deltas must be strictly increasing");
                }
                if samples.windows(2).any(|w| w[0].1 > w[1].1) {
                    return bad("table costs must be non-decreasing");
                }
                if samples.iter().any(|s| !(s.0 >= 0.0 && s.1 >= 0.0)) {
                    return bad("table entries must be non-negative");
                }
            }
        }
        Ok(())
    }

    /// `T(Δ)` in seconds.
    pub fn cost(&self, delta: f64) -> f64 {
        match self {
            StorageProfile::Affine { latency, bandwidth } => latency + delta / bandwidth,
            StorageProfile::AffineUniform {
                latency0,
                latency1,
                bandwidth0,
                bandwidth1,
            } => {
                let lat = (latency0 + latency1) / 2.0;
                // E[1/B] for B ~ U[B0, B1].
                let inv_bw = if bandwidth1 > bandwidth0 {
                    (bandwidth1.ln() - bandwidth0.ln()) / (bandwidth1 - bandwidth0)
                } else {
                    1.0 / bandwidth0
                };
                lat + delta * inv_bw
            }
            StorageProfile::Table { samples } => {
                let idx = samples.partition_point(|s| s.0 <= delta);
                if idx == 0 {
                    return samples[0].1;
                }
                if idx == samples.len() {
                    return samples[samples.len() - 1].1;
                }
                let (d0, c0) = samples[idx - 1];
                let (d1, c1) = samples[idx];
                c0 + (c1 - c0) * (delta - d0) / (d1 - d0)
            }
        }
    }

    #[inline]
    pub fn cost_bytes(&self, delta: u64) -> f64 {
        self.cost(delta as f64)
    }

    /// Latency/bandwidth pair when the profile is affine.
    pub fn as_affine(&self) -> Option<(f64, f64)> {
        match self {
            StorageProfile::Affine { latency, bandwidth } => Some((*latency, *bandwidth)),
            _ => None,
        }
    }

    /// Renders the profile as LF-terminated `key=value` lines.
    pub fn to_text(&self) -> String {
        match self {
            StorageProfile::Affine { latency, bandwidth } => {
                format!("kind=affine\nlatency_s={latency:?}\nbandwidth_bps={bandwidth:?}\n")
            }
            StorageProfile::AffineUniform {
                latency0,
                latency1,
                bandwidth0,
                bandwidth1,
            } => format!(
                "kind=affine_uniform\nlatency0_s={latency0:?}\nlatency1_s={latency1:?}\n\
                 bandwidth0_bps={bandwidth0:?}\nbandwidth1_bps={bandwidth1:?}\n"
            ),
            StorageProfile::Table { samples } => {
                let mut out = String::from("kind=table\n");
                for (d, c) in samples {
                    out.push_str(&format!("sample={d:?},{c:?}\n"));
                }
                out
            }
        }
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| StorageError::InvalidProfile(msg);
        let mut kind = None;
        let mut fields: HashMap<&str, f64> = HashMap::new();
        let mut samples = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed line {line:?}")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("bad number {s:?}")))
            };
            match k.trim() {
                "kind" => kind = Some(v.trim().to_string()),
                "sample" => {
                    let (d, c) = v
                        .split_once(',')
                        .ok_or_else(|| bad(format!("malformed sample {v:?}")))?;
                    samples.push((parse(d)?, parse(c)?));
                }
                key => {
                    fields.insert(key, parse(v)?);
                }
            }
        }
        let get = |name: &str| {
            fields
                .get(name)
                .copied()
                .ok_or_else(|| bad(format!("missing field {name}")))
        };
        match kind.as_deref() {
            Some("affine") => Self::affine(get("latency_s")?, get("bandwidth_bps")?),
            Some("affine_uniform") => Self::affine_uniform(
                get("latency0_s")?,
                get("latency1_s")?,
                get("bandwidth0_bps")?,
                get("bandwidth1_bps")?,
            ),
            Some("table") => Self::table(samples),
            Some(other) => Err(bad(format!("unknown kind {other:?}"))),
            None => Err(bad("missing kind".to_string())),
        }
    }
}

/// `mem://<name>` or `file://<path>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ResourceId {
    Mem(String),
    File(PathBuf),
}

impl ResourceId {
    pub fn mem(name: impl Into<String>) -> Self {
        ResourceId::Mem(name.into())
    }

    pub fn file(path: impl Into<PathBuf>) -> Self {
        ResourceId::File(path.into())
    }

    /// Appends `suffix` to the name/path, e.g. `file://idx` + `.root`.
    pub fn with_suffix(&self, suffix: &str) -> Self {
        match self {
            ResourceId::Mem(name) => ResourceId::Mem(format!("{name}{suffix}")),
            ResourceId::File(path) => {
                let mut s = path.clone().into_os_string();
                s.push(suffix);
                ResourceId::File(PathBuf::from(s))
            }
        }
    }
}

impl fmt::Display for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResourceId::Mem(name) => write!(f, "mem://{name}"),
            ResourceId::File(path) => write!(f, "file://{}", path.display()),
        }
    }
}

impl FromStr for ResourceId {
    type Err = StorageError;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(name) = s.strip_prefix("mem://") {
            if !name.is_empty() {
                return Ok(ResourceId::Mem(name.to_string()));
            }
        } else if let Some(path) = s.strip_prefix("file://") {
            if !path.is_empty() {
                return Ok(ResourceId::File(PathBuf::from(path)));
            }
        }
        Err(StorageError::InvalidResource(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ByteRange {
    pub offset: u64,
    pub length: u64,
}

impl ByteRange {
    pub fn new(offset: u64, length: u64) -> Self {
        ByteRange { offset, length }
    }

    pub fn end(&self) -> u64 {
        self.offset + self.length
    }
}

/// A read issued to a backend together with its modeled cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadRecord {
    pub delta: u64,
    pub modeled_cost: f64,
}

pub trait Backend: Send + Sync {
    /// Returns `min(length, extent - offset)` bytes starting at `offset`.
    fn read(&self, id: &ResourceId, range: ByteRange) -> Result<Vec<u8>>;

    /// Whole-object replace.
    fn write(&self, id: &ResourceId, bytes: &[u8]) -> Result<()>;

    fn extent(&self, id: &ResourceId) -> Result<u64>;

    /// Reads and reports how long the read took. Backends with a simulated
    /// clock report simulated time.
    fn timed_read(&self, id: &ResourceId, range: ByteRange) -> Result<(Vec<u8>, Duration)> {
        let start = Instant::now();
        let bytes = self.read(id, range)?;
        Ok((bytes, start.elapsed()))
    }
}

fn slice_range(data: &[u8], range: ByteRange) -> Result<Vec<u8>> {
    let extent = data.len() as u64;
    if range.offset >= extent {
        return Err(StorageError::OffsetBeyondExtent {
            offset: range.offset,
            extent,
        });
    }
    let end = range.offset.saturating_add(range.length).min(extent);
    Ok(data[range.offset as usize..end as usize].to_vec())
}

/// In-process object store. With a delay model attached, every read is
/// recorded together with its modeled cost and `timed_read` reports that
/// cost as simulated elapsed time.
#[derive(Default)]
pub struct MemBackend {
    objects: RwLock<HashMap<ResourceId, Arc<Vec<u8>>>>,
    delay: Option<StorageProfile>,
    log: Mutex<Vec<ReadRecord>>,
}

impl MemBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_delay_model(profile: StorageProfile) -> Self {
        MemBackend {
            delay: Some(profile),
            ..Self::default()
        }
    }

    pub fn delay_model(&self) -> Option<&StorageProfile> {
        self.delay.as_ref()
    }

    /// Drains the read log.
    pub fn take_reads(&self) -> Vec<ReadRecord> {
        std::mem::take(&mut *self.log.lock().unwrap())
    }

    fn fetch(&self, id: &ResourceId) -> Result<Arc<Vec<u8>>> {
        self.objects
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| StorageError::NotFound(id.to_string()))
    }
}

impl Backend for MemBackend {
    fn read(&self, id: &ResourceId, range: ByteRange) -> Result<Vec<u8>> {
        Ok(self.timed_read(id, range)?.0)
    }

    fn write(&self, id: &ResourceId, bytes: &[u8]) -> Result<()> {
        self.objects
            .write()
            .unwrap()
            .insert(id.clone(), Arc::new(bytes.to_vec()));
        Ok(())
    }

    fn extent(&self, id: &ResourceId) -> Result<u64> {
        Ok(self.fetch(id)?.len() as u64)
    }

    fn timed_read(&self, id: &ResourceId, range: ByteRange) -> Result<(Vec<u8>, Duration)> {
        let obj = self.fetch(id)?;
        match &self.delay {
            Some(profile) => {
                let bytes = slice_range(&obj, range)?;
                let modeled_cost = profile.cost_bytes(bytes.len() as u64);
                self.log.lock().unwrap().push(ReadRecord {
                    delta: bytes.len() as u64,
                    modeled_cost,
                });
                Ok((bytes, Duration::from_secs_f64(modeled_cost)))
            }
            None => {
                let start = Instant::now();
                let bytes = slice_range(&obj, range)?;
                Ok((bytes, start.elapsed()))
            }
        }
    }
}

/// OS files; `mem://` ids are rejected.
#[derive(Debug, Default, Clone)]
pub struct FileBackend;

impl FileBackend {
    fn path<'a>(&self, id: &'a ResourceId) -> Result<&'a PathBuf> {
        match id {
            ResourceId::File(p) => Ok(p),
            other => Err(StorageError::InvalidResource(other.to_string())),
        }
    }

    fn open(&self, id: &ResourceId) -> Result<fs::File> {
        let path = self.path(id)?;
        fs::File::open(path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => StorageError::NotFound(id.to_string()),
            _ => StorageError::Io(e),
        })
    }
}

impl Backend for FileBackend {
    fn read(&self, id: &ResourceId, range: ByteRange) -> Result<Vec<u8>> {
        let mut file = self.open(id)?;
        let extent = file.metadata()?.len();
        if range.offset >= extent {
            return Err(StorageError::OffsetBeyondExtent {
                offset: range.offset,
                extent,
            });
        }
        let len = range.length.min(extent - range.offset);
        let mut buf = vec![0u8; len as usize];
        file.seek(SeekFrom::Start(range.offset))?;
        file.read_exact(&mut buf)?;
        Ok(buf)
    }

    fn write(&self, id: &ResourceId, bytes: &[u8]) -> Result<()> {
        fs::write(self.path(id)?, bytes)?;
        Ok(())
    }

    fn extent(&self, id: &ResourceId) -> Result<u64> {
        Ok(self.open(id)?.metadata()?.len())
    }
}

/// Routes `mem://` ids to an in-process store and `file://` ids to the OS.
#[derive(Default)]
pub struct DispatchBackend {
    pub mem: MemBackend,
    pub file: FileBackend,
}

impl Backend for DispatchBackend {
    fn read(&self, id: &ResourceId, range: ByteRange) -> Result<Vec<u8>> {
        match id {
            ResourceId::Mem(_) => self.mem.read(id, range),
            ResourceId::File(_) => self.file.read(id, range),
        }
    }

    fn write(&self, id: &ResourceId, bytes: &[u8]) -> Result<()> {
        match id {
            ResourceId::Mem(_) => self.mem.write(id, bytes),
            ResourceId::File(_) => self.file.write(id, bytes),
        }
    }

    fn extent(&self, id: &ResourceId) -> Result<u64> {
        match id {
            ResourceId::Mem(_) => self.mem.extent(id),
            ResourceId::File(_) => self.file.extent(id),
        }
    }

    fn timed_read(&self, id: &ResourceId, range: ByteRange) -> Result<(Vec<u8>, Duration)> {
        match id {
            ResourceId::Mem(_) => self.mem.timed_read(id, range),
            ResourceId::File(_) => self.file.timed_read(id, range),
        }
    }
}

/// Least-squares fit of `cost = ℓ + Δ·s` over `(Δ, cost)` points, returning
/// an affine profile with `ℓ ≥ 0` and `s ≥ MIN_SLOPE`.
pub fn fit_affine(points: &[(f64, f64)]) -> Result<StorageProfile> {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx.is_nan() || sxx <= 0.0 {
        return Err(StorageError::InvalidProfile(
            "profiling needs at least two distinct deltas".into(),
        ));
    }
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let slope = (sxy / sxx).max(MIN_SLOPE);
    let latency = (mean_y - slope * mean_x).max(0.0);
    StorageProfile::affine(latency, 1.0 / slope)
}

/// Measures a backend: `reps` timed reads per delta at random offsets, the
/// median per delta, then an affine least-squares fit.
pub fn profile_backend(
    backend: &dyn Backend,
    resource: &ResourceId,
    deltas: &[u64],
    reps: usize,
    seed: u64,
) -> Result<StorageProfile> {
    if reps == 0 {
        return Err(StorageError::InvalidProfile("reps must be >= 1".into()));
    }
    let mut distinct = deltas.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(StorageError::InvalidProfile(
            "profiling needs at least two distinct deltas".into(),
        ));
    }
    let extent = backend.extent(resource)?;
    let largest = *distinct.last().unwrap();
    if extent < largest {
        return Err(StorageError::InvalidProfile(format!(
            "object holds {extent} bytes, largest delta is {largest}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(distinct.len());
    for &delta in &distinct {
        let mut times = Vec::with_capacity(reps);
        for _ in 0..reps {
            let offset = rng.gen_range(0..=extent - delta);
            let (_, elapsed) = backend.timed_read(resource, ByteRange::new(offset, delta))?;
            times.push(elapsed.as_secs_f64());
        }
        times.sort_by(f64::total_cmp);
        let median = if reps % 2 == 1 {
            times[reps / 2]
        } else {
            (times[reps / 2 - 1] + times[reps / 2]) / 2.0
        };
        points.push((delta as f64, median));
    }
    fit_affine(&points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env_a() -> StorageProfile {
        StorageProfile::affine(100e-6, 1e9).unwrap()
    }

    #[test]
    fn affine_cost_matches_motivating_numbers() {
        let p = env_a();
        assert!((p.cost(4000.0) - 104e-6).abs() < 1e-15);
        assert!((p.cost(100_000.0) - 200e-6).abs() < 1e-15);
        assert_eq!(p.cost(0.0), 100e-6);
    }

    #[test]
    fn affine_uniform_reduces_to_affine_when_degenerate() {
        let p = StorageProfile::affine_uniform(1e-3, 1e-3, 5e6, 5e6).unwrap();
        assert!((p.cost(1e6) - (1e-3 + 0.2)).abs() < 1e-12);
        let q = StorageProfile::affine_uniform(1e-3, 3e-3, 1e6, 2e6).unwrap();
        let expected = 2e-3 + 1e6 * (2e6f64.ln() - 1e6f64.ln()) / 1e6;
        assert!((q.cost(1e6) - expected).abs() < 1e-12);
    }

    #[test]
    fn table_interpolates_and_clamps() {
        let p = StorageProfile::table(vec![(10.0, 1.0), (20.0, 3.0)]).unwrap();
        assert_eq!(p.cost(0.0), 1.0);
        assert_eq!(p.cost(15.0), 2.0);
        assert_eq!(p.cost(1e9), 3.0);
        assert!(StorageProfile::table(vec![(10.0, 1.0), (10.0, 2.0)]).is_err());
    }

    #[test]
    fn invalid_profiles_rejected() {
        assert!(StorageProfile::affine(-1.0, 1.0).is_err());
        assert!(StorageProfile::affine(0.0, 0.0).is_err());
        assert!(StorageProfile::affine_uniform(2.0, 1.0, 1.0, 2.0).is_err());
        assert!(StorageProfile::affine_uniform(1.0, 2.0, 3.0, 2.0).is_err());
    }

    #[test]
    fn profile_text_round_trip() {
        let p = StorageProfile::affine(0.05, 12e6).unwrap();
        let text = p.to_text();
        assert_eq!(text, "kind=affine\nlatency_s=0.05\nbandwidth_bps=12000000.0\n");
        assert_eq!(StorageProfile::from_text(&text).unwrap(), p);
        for q in [
            StorageProfile::affine_uniform(1e-3, 2e-3, 1e6, 4e6).unwrap(),
            StorageProfile::table(vec![(1.0, 0.5), (4096.0, 0.75)]).unwrap(),
        ] {
            assert_eq!(StorageProfile::from_text(&q.to_text()).unwrap(), q);
        }
        assert!(StorageProfile::from_text("kind=affine\nlatency_s=1\n").is_err());
    }

    #[test]
    fn resource_id_grammar() {
        assert_eq!("mem://a".parse::<ResourceId>().unwrap(), ResourceId::mem("a"));
        assert_eq!(
            "file://x/y.bin".parse::<ResourceId>().unwrap(),
            ResourceId::file("x/y.bin")
        );
        for bad in ["", "mem://", "s3://bucket", "file://"] {
            assert!(bad.parse::<ResourceId>().is_err(), "{bad}");
        }
        let id = ResourceId::mem("idx").with_suffix(".root");
        assert_eq!(id.to_string(), "mem://idx.root");
    }

    #[test]
    fn mem_reads_truncate_at_extent() {
        let b = MemBackend::new();
        let id = ResourceId::mem("obj");
        b.write(&id, b"abcdef").unwrap();
        assert_eq!(b.read(&id, ByteRange::new(2, 3)).unwrap(), b"cde");
        assert_eq!(b.read(&id, ByteRange::new(4, 10)).unwrap(), b"ef");
        assert!(matches!(
            b.read(&id, ByteRange::new(6, 1)),
            Err(StorageError::OffsetBeyondExtent { .. })
        ));
        assert!(matches!(
            b.read(&ResourceId::mem("nope"), ByteRange::new(0, 1)),
            Err(StorageError::NotFound(_))
        ));
    }

    #[test]
    fn mem_write_semantics() {
        let b = MemBackend::new();
        let id = ResourceId::mem("obj");
        b.write(&id, b"").unwrap();
        assert!(b.read(&id, ByteRange::new(0, 1)).is_err());
        b.write(&id, b"hello world").unwrap();
        b.write(&id, b"hi").unwrap();
        assert_eq!(b.extent(&id).unwrap(), 2);
        assert_eq!(b.read(&id, ByteRange::new(0, 100)).unwrap(), b"hi");
    }

    #[test]
    fn file_backend_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let id = ResourceId::file(dir.path().join("obj.bin"));
        let data: Vec<u8> = (0..4096u32).map(|i| (i % 251) as u8).collect();
        let b = FileBackend;
        b.write(&id, &data).unwrap();
        assert_eq!(b.read(&id, ByteRange::new(0, 4096)).unwrap(), data);
        assert_eq!(b.read(&id, ByteRange::new(4000, 500)).unwrap(), &data[4000..]);
        assert!(b.read(&id, ByteRange::new(4096, 1)).is_err());
        let missing = ResourceId::file(dir.path().join("missing"));
        assert!(matches!(
            b.read(&missing, ByteRange::new(0, 1)),
            Err(StorageError::NotFound(_))
        ));
    }

    #[test]
    fn delay_model_records_reads() {
        let b = MemBackend::with_delay_model(env_a());
        let id = ResourceId::mem("obj");
        b.write(&id, &vec![0u8; 10_000]).unwrap();
        let (_, t) = b.timed_read(&id, ByteRange::new(0, 4000)).unwrap();
        assert!((t.as_secs_f64() - 104e-6).abs() < 1e-9);
        b.read(&id, ByteRange::new(9000, 4000)).unwrap();
        let log = b.take_reads();
        assert_eq!(log.len(), 2);
        assert_eq!(log[1].delta, 1000);
        assert!(b.take_reads().is_empty());
    }

    fn profiled(model: StorageProfile, deltas: &[u64], reps: usize) -> StorageProfile {
        let b = MemBackend::with_delay_model(model);
        let id = ResourceId::mem("obj");
        b.write(&id, &vec![0u8; *deltas.iter().max().unwrap() as usize * 2])
            .unwrap();
        profile_backend(&b, &id, deltas, reps, 7).unwrap()
    }

    #[test]
    fn profiling_recovers_injected_model() {
        let deltas = [4_000, 40_000, 400_000, 4_000_000];
        let fit = profiled(StorageProfile::nfs(), &deltas, 9);
        let (lat, bw) = fit.as_affine().unwrap();
        assert!((lat - 0.05).abs() / 0.05 < 0.05, "{lat}");
        assert!((bw - 12e6).abs() / 12e6 < 0.05, "{bw}");
    }

    #[test]
    fn profiling_zero_latency_clamps() {
        let fit = profiled(StorageProfile::affine(0.0, 1e8).unwrap(), &[1_000, 100_000], 3);
        let (lat, _) = fit.as_affine().unwrap();
        assert!((0.0..1e-9).contains(&lat));
    }

    #[test]
    fn profiling_constant_time_floors_slope() {
        let constant = StorageProfile::table(vec![(0.0, 1e-3), (1e12, 1e-3)]).unwrap();
        let fit = profiled(constant, &[4_000, 1_000_000], 3);
        let (lat, bw) = fit.as_affine().unwrap();
        assert!((lat - 1e-3).abs() < 1e-9);
        assert_eq!(bw, 1.0 / MIN_SLOPE);
    }

    #[test]
    fn profiling_preconditions() {
        let b = MemBackend::with_delay_model(env_a());
        let id = ResourceId::mem("obj");
        b.write(&id, &[0u8; 100]).unwrap();
        assert!(profile_backend(&b, &id, &[10, 10], 3, 0).is_err());
        assert!(profile_backend(&b, &id, &[10, 20], 0, 0).is_err());
        assert!(profile_backend(&b, &id, &[10, 200], 1, 0).is_err());
    }
}
