use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use airidx::cost::expected_read_volume;
use airidx::data::write_sosd;
use airidx::format::{decode_design, encode_design, encode_rank_data, DATA_ENTRY_SIZE};
use airidx::query::{modeled_trace_cost, QueryError, DEFAULT_PAGE_SIZE};
use airidx::storage::{profile_backend, ByteRange, FileBackend};
use airidx::{
    airtune, build_index, default_builder_set, lookup, to_key_position_set, validate_design, Backend,
    BuiltIndex, DatasetSpec, Key, KeyPositionSet, LookupResult, MemBackend, PageCache, QueryDistribution,
    ResourceId, StorageProfile, TuneConfig,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::args::*;
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

const SEED_VAR: &str = "AIRIDX_SEED";

/// `AIRIDX_SEED`, when set, replaces every seed.
fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_VAR}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn seed(flag: u64) -> Result<u64> {
    Ok(seed_override()?.unwrap_or(flag))
}

/// Three significant digits in µs, ms or s.
pub fn fmt_time(s: f64) -> String {
    let (v, unit) = if s < 1e-3 {
        (s * 1e6, "µs")
    } else if s < 1.0 {
        (s * 1e3, "ms")
    } else {
        (s, "s")
    };
    format!("{} {unit}", sig3(v))
}

fn sig3(v: f64) -> String {
    let digits = if v == 0.0 { 0 } else { v.abs().log10().floor() as i32 };
    let decimals = (2 - digits).max(0) as usize;
    format!("{v:.decimals$}")
}

fn fmt_rate(bps: f64) -> String {
    let (v, unit) = match bps {
        b if b >= 1e9 => (b / 1e9, "GB/s"),
        b if b >= 1e6 => (b / 1e6, "MB/s"),
        b if b >= 1e3 => (b / 1e3, "KB/s"),
        b => (b, "B/s"),
    };
    format!("{} {unit}", sig3(v))
}

fn preset(name: &str) -> Result<StorageProfile> {
    StorageProfile::preset(name).ok_or_else(|| CliError::Usage(format!("unknown preset {name:?}; use nfs, ssd or hdd")))
}

fn read_profile(path: &Path) -> Result<StorageProfile> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    Ok(StorageProfile::from_text(&text)?)
}

fn load_profile(src: &ProfileSource) -> Result<StorageProfile> {
    match (&src.file, &src.preset) {
        (Some(p), _) => read_profile(p),
        (None, Some(name)) => preset(name),
        (None, None) => Err(CliError::Usage("one of --profile or --preset is required".into())),
    }
}

fn load_optional_profile(src: &OptionalProfileSource) -> Result<StorageProfile> {
    match (&src.file, &src.preset) {
        (Some(p), _) => read_profile(p),
        (None, Some(name)) => preset(name),
        (None, None) => Ok(StorageProfile::ssd()),
    }
}

fn parse_dataset(spec: &str) -> Result<DatasetSpec> {
    let spec: DatasetSpec = spec.parse().map_err(|e: airidx::data::DataError| CliError::Usage(e.to_string()))?;
    Ok(match seed_override()? {
        Some(s) => spec.with_seed(s),
        None => spec,
    })
}

/// Keys in ascending order plus their position set; empty data is rejected.
fn load_dataset(spec: &str) -> Result<(Vec<Key>, KeyPositionSet)> {
    let keys = parse_dataset(spec)?.load()?;
    if keys.is_empty() {
        return Err(CliError::Domain(format!("dataset {spec} is empty")));
    }
    let set = to_key_position_set(&keys)?;
    Ok((keys, set))
}

fn tune_config(search: &SearchArgs) -> Result<TuneConfig> {
    let g = &search.grid;
    let builder_set = default_builder_set(g.lambda_low, g.lambda_high, g.base, g.pieces)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut config = TuneConfig {
        k: search.k,
        builder_set,
        max_layers: search.max_layers,
        ..TuneConfig::default()
    };
    if let Some(p) = search.parallelism {
        config.parallelism = p;
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn absolute(path: &Path) -> Result<PathBuf> {
    Ok(std::path::absolute(path)?)
}

fn index_prefix(path: &Path) -> Result<ResourceId> {
    Ok(ResourceId::file(absolute(path)?))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn profile(args: &ProfileArgs) -> Result<()> {
    if args.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    let mut distinct = args.deltas.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 || distinct[0] == 0 {
        return Err(CliError::Usage("--deltas needs at least two distinct positive sizes".into()));
    }
    let target: ResourceId = args.target.parse().map_err(|e: airidx::storage::StorageError| CliError::Usage(e.to_string()))?;
    let injected = match (args.inject_latency, args.inject_bandwidth) {
        (Some(l), Some(b)) => Some(StorageProfile::affine(l, b).map_err(|e| CliError::Usage(e.to_string()))?),
        _ => None,
    };
    let seed = seed(args.seed)?;
    let fitted = match (&target, injected) {
        (ResourceId::Mem(_), delay) => {
            let backend = match delay {
                Some(p) => MemBackend::with_delay_model(p),
                None => MemBackend::new(),
            };
            backend.write(&target, &vec![0u8; *distinct.last().unwrap() as usize])?;
            profile_backend(&backend, &target, &distinct, args.reps, seed)?
        }
        (ResourceId::File(_), None) => profile_backend(&FileBackend, &target, &distinct, args.reps, seed)?,
        (ResourceId::File(_), Some(_)) => {
            return Err(CliError::Usage("--inject-latency/--inject-bandwidth need a mem:// target".into()))
        }
    };
    fs::write(&args.out, fitted.to_text())?;
    if let Some((l, b)) = fitted.as_affine() {
        println!("latency {}, bandwidth {}", fmt_time(l), fmt_rate(b));
    }
    Ok(())
}

#[derive(Serialize)]
struct TuneSidecar<'a> {
    dataset: String,
    profile: &'a str,
    k: usize,
    max_layers: usize,
    builder_count: usize,
    builders: Vec<String>,
    report: airidx::tuner::TuneReport,
}

pub fn tune(args: &TuneArgs) -> Result<()> {
    let config = tune_config(&args.search)?;
    let profile = load_profile(&args.profile)?;
    let dataset = parse_dataset(&args.data)?;
    let (_, data) = load_dataset(&args.data)?;
    let result = airtune(&data, &profile, &config)?;
    let report = result.report(&data, &profile, &QueryDistribution::Auto)?;
    fs::write(&args.out, encode_design(&result.design)?)?;
    let text = profile.to_text();
    let side = TuneSidecar {
        dataset: dataset.to_string(),
        profile: &text,
        k: config.k,
        max_layers: config.max_layers,
        builder_count: config.builder_set.len(),
        builders: result.builders.iter().map(ToString::to_string).collect(),
        report,
    };
    fs::write(sidecar(&args.out), serde_json::to_string_pretty(&side)? + "\n")?;
    println!(
        "layers {} [{}], modeled cost {}, {} candidates explored",
        side.report.num_layers,
        side.builders.join(" -> "),
        fmt_time(side.report.objective_s),
        side.report.explored
    );
    Ok(())
}

pub fn build(args: &BuildArgs) -> Result<()> {
    let design = decode_design(&fs::read(&args.design)?)?;
    let (keys, data) = load_dataset(&args.data)?;
    if let Some(v) = validate_design(&design, &data).first() {
        return Err(CliError::Domain(format!("design does not fit {}: {v}", args.data)));
    }
    if let Some(dir) = absolute(&args.out)?.parent() {
        fs::create_dir_all(dir)?;
    }
    let prefix = index_prefix(&args.out)?;
    let data_id = prefix.with_suffix(".data");
    FileBackend.write(&data_id, &encode_rank_data(&keys)?)?;
    build_index(&design, &data_id, &prefix, &FileBackend)?;
    println!(
        "built {} layers over {} keys at {}",
        design.num_layers(),
        keys.len(),
        absolute(&args.out)?.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TraceLine<'a> {
    #[serde(flatten)]
    result: &'a LookupResult,
    modeled_cost_s: f64,
}

pub fn query(args: &QueryArgs) -> Result<()> {
    let profile = load_optional_profile(&args.profile)?;
    let index = BuiltIndex::open(&index_prefix(&args.index)?, &FileBackend)?;
    let cache = match args.cache_pages {
        0 => PageCache::disabled(),
        n => PageCache::new(DEFAULT_PAGE_SIZE, n),
    };
    let mut trace_out = match &args.trace_out {
        Some(p) => Some(fs::OpenOptions::new().create(true).append(true).open(p)?),
        None => None,
    };
    let mut missing = Vec::new();
    for &key in &args.keys {
        match lookup(&index, key, &cache, &FileBackend) {
            Ok(r) => {
                let cost = modeled_trace_cost(&r, &profile);
                println!("key {} value {} modeled cost {}", r.key, r.value, fmt_time(cost));
                for s in &r.trace {
                    let hit = if s.cache_hit { " cached" } else { "" };
                    println!("  level {}: {} bytes at {}{hit}", s.level, s.length, s.offset);
                }
                if let Some(f) = trace_out.as_mut() {
                    serde_json::to_writer(&mut *f, &TraceLine { result: &r, modeled_cost_s: cost })?;
                    f.write_all(b"\n")?;
                }
            }
            Err(QueryError::NotFound(k)) => {
                println!("key {k} not found");
                missing.push(k);
            }
            Err(e) => return Err(e.into()),
        }
    }
    match missing.len() {
        0 => Ok(()),
        1 => Err(CliError::Domain(format!("key {} not found", missing[0]))),
        n => Err(CliError::Domain(format!("{n} keys not found"))),
    }
}

/// Keys of an index's data layer, deduplicated.
fn indexed_keys(index: &BuiltIndex) -> Result<Vec<Key>> {
    let (resource, _) = index.location(0);
    let bytes = match index.data_extent {
        0 => Vec::new(),
        n => FileBackend.read(&resource, ByteRange::new(0, n))?,
    };
    let mut keys: Vec<Key> = bytes
        .chunks_exact(DATA_ENTRY_SIZE as usize)
        .map(|e| u64::from_le_bytes(e[..8].try_into().unwrap()))
        .collect();
    keys.dedup();
    Ok(keys)
}

#[derive(Serialize)]
struct BenchRow {
    query: usize,
    key: Key,
    cold_s: f64,
    warm_s: f64,
}

fn csv_sink(out: &Option<PathBuf>) -> Result<csv::Writer<Box<dyn Write>>> {
    let w: Box<dyn Write> = match out {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(w))
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    if args.queries == 0 {
        return Err(CliError::Usage("--queries must be at least 1".into()));
    }
    let profile = load_profile(&args.profile)?;
    let index = BuiltIndex::open(&index_prefix(&args.index)?, &FileBackend)?;
    let keys = indexed_keys(&index)?;
    if keys.is_empty() {
        return Err(CliError::Domain("index holds no keys".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed(args.seed)?);
    let queries: Vec<Key> = (0..args.queries).map(|_| *keys.choose(&mut rng).unwrap()).collect();

    let cold_cache = PageCache::disabled();
    let warm_cache = PageCache::new(DEFAULT_PAGE_SIZE, args.cache_pages);
    let run = |cache: &PageCache, x: Key| -> Result<f64> {
        Ok(modeled_trace_cost(&lookup(&index, x, cache, &FileBackend)?, &profile))
    };
    for &x in &queries {
        run(&warm_cache, x)?;
    }
    let mut sink = csv_sink(&args.out)?;
    let (mut cold_sum, mut warm_sum) = (0.0, 0.0);
    for (i, &key) in queries.iter().enumerate() {
        let cold_s = run(&cold_cache, key)?;
        let warm_s = run(&warm_cache, key)?;
        cold_sum += cold_s;
        warm_sum += warm_s;
        sink.serialize(BenchRow {
            query: i,
            key,
            cold_s,
            warm_s,
        })?;
    }
    sink.flush()?;
    let n = queries.len() as f64;
    eprintln!("mean cold {}, mean warm {}", fmt_time(cold_sum / n), fmt_time(warm_sum / n));
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    latency_s: f64,
    bandwidth_bps: f64,
    layers: usize,
    total_read_volume: f64,
    cost_s: f64,
}

/// `steps` points from `lo` to `hi`, evenly spaced in log scale.
fn log_grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..steps)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (steps - 1) as f64))
        .collect()
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let valid = |lo: f64, hi: f64| lo > 0.0 && hi >= lo && hi.is_finite();
    if args.steps == 0 || !valid(args.latency_min, args.latency_max) || !valid(args.bandwidth_min, args.bandwidth_max) {
        return Err(CliError::Usage("sweep needs steps >= 1 and 0 < min <= max on both axes".into()));
    }
    let config = tune_config(&args.search)?;
    let (_, data) = load_dataset(&args.data)?;
    let mut sink = csv_sink(&args.out)?;
    for latency in log_grid(args.latency_min, args.latency_max, args.steps) {
        for bandwidth in log_grid(args.bandwidth_min, args.bandwidth_max, args.steps) {
            let profile = StorageProfile::affine(latency, bandwidth).map_err(|e| CliError::Usage(e.to_string()))?;
            let result = airtune(&data, &profile, &config)?;
            sink.serialize(SweepRow {
                latency_s: latency,
                bandwidth_bps: bandwidth,
                layers: result.design.num_layers(),
                total_read_volume: expected_read_volume(&result.design, &data, &QueryDistribution::Auto)?,
                cost_s: result.objective,
            })?;
        }
    }
    sink.flush()?;
    Ok(())
}

pub fn gen(args: &GenArgs) -> Result<()> {
    let spec = parse_dataset(&args.dataset)?;
    if matches!(spec, DatasetSpec::SosdFile(_)) {
        return Err(CliError::Usage("gen needs a gmm: or uniform: dataset".into()));
    }
    let keys = spec.load()?;
    write_sosd(&args.out, &keys)?;
    println!("wrote {} keys ({spec}) to {}", keys.len(), args.out.display());
    Ok(())
}
