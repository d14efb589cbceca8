use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

/// Storage-aware hierarchical index tuning.
#[derive(Debug, Parser)]
#[command(name = "airidx", version, args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Measure a storage target and write its affine profile.
    Profile(ProfileArgs),
    /// Search for the index design with the lowest modeled lookup latency.
    Tune(TuneArgs),
    /// Serialize a data file and a tuned design as an on-storage index.
    Build(BuildArgs),
    /// Look up keys in a built index.
    Query(QueryArgs),
    /// Emit per-query cold and warm modeled latencies as CSV.
    Bench(BenchArgs),
    /// Tune over a log grid of latencies and bandwidths; emit CSV.
    Sweep(SweepArgs),
    /// Write a synthetic dataset as a SOSD-style key file.
    Gen(GenArgs),
}

/// Where the storage profile comes from. Exactly one is required.
#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct ProfileSource {
    /// Profile file written by `airidx profile`.
    #[arg(long = "profile", value_name = "FILE")]
    pub file: Option<PathBuf>,
    /// Canned profile: nfs, ssd or hdd.
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
}

/// Same as [`ProfileSource`] but optional, falling back to `ssd`.
#[derive(Debug, Clone, Args)]
#[group(required = false, multiple = false)]
pub struct OptionalProfileSource {
    #[arg(long = "profile", value_name = "FILE")]
    pub file: Option<PathBuf>,
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// Resource to probe, e.g. `file:///data/blob` or `mem://probe`.
    #[arg(long)]
    pub target: String,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Read sizes in bytes (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = [4096u64, 16384, 65536, 262144, 1048576, 4194304])]
    pub deltas: Vec<u64>,
    /// Timed reads per size; the median is fitted.
    #[arg(long, default_value_t = 9)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Simulated latency in seconds for a `mem://` target.
    #[arg(long, requires = "inject_bandwidth")]
    pub inject_latency: Option<f64>,
    /// Simulated bandwidth in bytes per second for a `mem://` target.
    #[arg(long, requires = "inject_latency")]
    pub inject_bandwidth: Option<f64>,
}

/// The builder family grid searched by the tuner.
#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = 64)]
    pub lambda_low: u64,
    #[arg(long, default_value_t = 1 << 20)]
    pub lambda_high: u64,
    #[arg(long, default_value_t = 2.0)]
    pub base: f64,
    /// Pieces per step node.
    #[arg(long, default_value_t = 16)]
    pub pieces: usize,
}

/// Tuner search controls.
#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Candidates expanded per layer.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 8)]
    pub max_layers: usize,
    /// Worker threads; 1 runs sequentially. Results do not depend on it.
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// `gmm:<n>[:<clusters>[:<seed>]]`, `uniform:<n>[:<seed>]` or a key file.
    #[arg(long)]
    pub data: String,
    #[command(flatten)]
    pub profile: ProfileSource,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Design file; a JSON report is written next to it with `.json` appended.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long, value_name = "FILE")]
    pub design: PathBuf,
    /// The dataset the design was tuned on.
    #[arg(long)]
    pub data: String,
    /// Output prefix: writes `<prefix>.data`, `<prefix>.root`, `<prefix>.layer<l>`.
    #[arg(long, value_name = "PREFIX")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Prefix passed to `airidx build --out`.
    #[arg(long, value_name = "PREFIX")]
    pub index: PathBuf,
    /// Keys to look up; repeat or comma separate.
    #[arg(long = "key", required = true, value_delimiter = ',')]
    pub keys: Vec<u64>,
    #[command(flatten)]
    pub profile: OptionalProfileSource,
    /// Page-cache capacity in 4096-byte pages; 0 reads cold.
    #[arg(long, default_value_t = 0)]
    pub cache_pages: usize,
    /// Append one JSON object per lookup to this file.
    #[arg(long, value_name = "FILE")]
    pub trace_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_name = "PREFIX")]
    pub index: PathBuf,
    #[command(flatten)]
    pub profile: ProfileSource,
    /// Query keys sampled uniformly from the indexed keys.
    #[arg(long, default_value_t = 1000)]
    pub queries: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Page-cache capacity for the warm pass.
    #[arg(long, default_value_t = 1 << 16)]
    pub cache_pages: usize,
    /// CSV destination; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: String,
    #[arg(long, default_value_t = 1e-6)]
    pub latency_min: f64,
    #[arg(long, default_value_t = 1e3)]
    pub latency_max: f64,
    #[arg(long, default_value_t = 1e3)]
    pub bandwidth_min: f64,
    #[arg(long, default_value_t = 1e12)]
    pub bandwidth_max: f64,
    /// Grid points per axis.
    #[arg(long, default_value_t = 5)]
    pub steps: usize,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// `gmm:<n>[:<clusters>[:<seed>]]` or `uniform:<n>[:<seed>]`.
    #[arg(long)]
    pub dataset: String,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

/// Splices `key=value` lines from `--config <file>` in front of the
/// subcommand's own flags, so explicit flags win.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            let path = it.next().ok_or_else(|| CliError::Usage("--config needs a file".into()))?;
            config = Some(PathBuf::from(path));
        } else if let Some(path) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(path));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else { return Ok(rest) };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut injected = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{}:{}: expected key=value", path.display(), n + 1)))?;
        injected.push(OsString::from(format!("--{}={}", k.trim().replace('_', "-"), v.trim())));
    }
    // Program name, then the subcommand, then config flags.
    let at = rest.len().min(2);
    rest.splice(at..at, injected);
    Ok(rest)
}
