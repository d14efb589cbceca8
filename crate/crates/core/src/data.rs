//! Key datasets: SOSD-style binary files and seeded synthetic generators.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::format::DATA_ENTRY_SIZE;
use crate::model::{Key, KeyPositionSet, ModelError, PositionRange, MAX_KEY};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("file too short: header declares {declared} keys, {available} bytes of keys present")]
    Truncated { declared: u64, available: u64 },
    #[error("count mismatch: header declares {declared} keys, payload holds {available} bytes")]
    CountMismatch { declared: u64, available: u64 },
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Parses `count: u64 LE` followed by `count` LE keys; returns them sorted.
pub fn decode_sosd(bytes: &[u8]) -> Result<Vec<Key>> {
    if bytes.len() < 8 {
        return Err(DataError::Truncated {
            declared: 0,
            available: 0,
        });
    }
    let declared = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    let available = (bytes.len() - 8) as u64;
    let needed = declared.checked_mul(8);
    match needed {
        Some(n) if n == available => {}
        Some(n) if n > available => return Err(DataError::Truncated { declared, available }),
        None => return Err(DataError::Truncated { declared, available }),
        Some(_) => return Err(DataError::CountMismatch { declared, available }),
    }
    let mut keys: Vec<Key> = bytes[8..]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if keys.windows(2).any(|w| w[0] > w[1]) {
        keys.sort_unstable();
    }
    Ok(keys)
}

pub fn encode_sosd(keys: &[Key]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * (keys.len() + 1));
    out.extend_from_slice(&(keys.len() as u64).to_le_bytes());
    for k in keys {
        out.extend_from_slice(&k.to_le_bytes());
    }
    out
}

pub fn load_sosd(path: impl AsRef<Path>) -> Result<Vec<Key>> {
    decode_sosd(&std::fs::read(path)?)
}

pub fn write_sosd(path: impl AsRef<Path>, keys: &[Key]) -> Result<()> {
    std::fs::write(path, encode_sosd(keys))?;
    Ok(())
}

/// Draws until `n` distinct keys exist; keys are sorted.
fn distinct_keys(n: usize, mut draw: impl FnMut() -> Option<Key>) -> Vec<Key> {
    let mut keys: Vec<Key> = Vec::with_capacity(n);
    while keys.len() < n {
        let missing = n - keys.len();
        keys.extend((0..missing).filter_map(|_| draw()));
        keys.sort_unstable();
        keys.dedup();
    }
    keys
}

/// Equal-weight mixture of `clusters` normals: centers uniform in
/// `[0, 2⁶³)`, standard deviations uniform in `[2²⁰, 2³⁰)`. Samples are
/// rounded, kept below `MAX_KEY`, deduplicated and topped up to `n`.
pub fn gen_gmm(n: usize, clusters: usize, seed: u64) -> Vec<Key> {
    let clusters = clusters.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps: Vec<Normal<f64>> = (0..clusters)
        .map(|_| {
            let center = rng.gen_range(0.0..9_223_372_036_854_775_808.0);
            let sd = rng.gen_range((1u64 << 20) as f64..(1u64 << 30) as f64);
            Normal::new(center, sd).expect("finite positive stddev")
        })
        .collect();
    distinct_keys(n, || {
        let c = rng.gen_range(0..clusters);
        let v = comps[c].sample(&mut rng).round();
        (v >= 0.0 && v < MAX_KEY as f64).then_some(v as Key)
    })
}

/// Keys uniform in `[0, MAX_KEY)`.
pub fn gen_uniform(n: usize, seed: u64) -> Vec<Key> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    distinct_keys(n, || Some(rng.gen_range(0..MAX_KEY)))
}

/// One pair per distinct key covering all of its 16-byte data entries.
pub fn to_key_position_set(keys: &[Key]) -> Result<KeyPositionSet> {
    let es = DATA_ENTRY_SIZE as u64;
    let mut out_keys = Vec::new();
    let mut ranges: Vec<PositionRange> = Vec::new();
    for (i, &k) in keys.iter().enumerate() {
        let at = i as u64 * es;
        match (out_keys.last(), ranges.last_mut()) {
            (Some(&last), Some(r)) if last == k => r.hi = at + es,
            _ => {
                out_keys.push(k);
                ranges.push(PositionRange::new(at, at + es));
            }
        }
    }
    Ok(KeyPositionSet::new(out_keys, ranges)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetSpec {
    SosdFile(PathBuf),
    Gmm { n: usize, clusters: usize, seed: u64 },
    Uniform { n: usize, seed: u64 },
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Vec<Key>> {
        match self {
            DatasetSpec::SosdFile(p) => load_sosd(p),
            DatasetSpec::Gmm { n, clusters, seed } => Ok(gen_gmm(*n, *clusters, *seed)),
            DatasetSpec::Uniform { n, seed } => Ok(gen_uniform(*n, *seed)),
        }
    }

    /// Replaces the generator seed; files are unaffected.
    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            DatasetSpec::Gmm { n, clusters, .. } => DatasetSpec::Gmm { n, clusters, seed },
            DatasetSpec::Uniform { n, .. } => DatasetSpec::Uniform { n, seed },
            s => s,
        }
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSpec::SosdFile(p) => write!(f, "sosd:{}", p.display()),
            DatasetSpec::Gmm { n, clusters, seed } => write!(f, "gmm:{n}:{clusters}:{seed}"),
            DatasetSpec::Uniform { n, seed } => write!(f, "uniform:{n}:{seed}"),
        }
    }
}

impl FromStr for DatasetSpec {
    type Err = DataError;

    /// `gmm:<n>[:<clusters>[:<seed>]]`, `uniform:<n>[:<seed>]`,
    /// `sosd:<path>` or a bare path.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || DataError::InvalidSpec(s.to_string());
        let num = |t: &str| t.parse::<u64>().map_err(|_| bad());
        let parts: Vec<&str> = s.split(':').collect();
        let spec = match parts.as_slice() {
            ["gmm", rest @ ..] if (1..=3).contains(&rest.len()) => DatasetSpec::Gmm {
                n: num(rest[0])? as usize,
                clusters: rest.get(1).map_or(Ok(100), |t| num(t))? as usize,
                seed: rest.get(2).map_or(Ok(42), |t| num(t))?,
            },
            ["uniform", rest @ ..] if (1..=2).contains(&rest.len()) => DatasetSpec::Uniform {
                n: num(rest[0])? as usize,
                seed: rest.get(1).map_or(Ok(42), |t| num(t))?,
            },
            _ => match s.strip_prefix("sosd:") {
                Some(p) if !p.is_empty() => DatasetSpec::SosdFile(p.into()),
                Some(_) => return Err(bad()),
                None if !s.is_empty() => DatasetSpec::SosdFile(s.into()),
                None => return Err(bad()),
            },
        };
        match spec {
            DatasetSpec::Gmm { n: 0, .. } | DatasetSpec::Uniform { n: 0, .. } => {
                Err(DataError::InvalidSpec(format!("{s}: n must be at least 1")))
            }
            DatasetSpec::Gmm { clusters: 0, .. } => Err(DataError::InvalidSpec(format!("{s}: clusters must be at least 1"))),
            spec => Ok(spec),
        }
    }
}
