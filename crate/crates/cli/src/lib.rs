//! Command-line front end: `add-noise`, `despeckle`, `evaluate` and `ablate`.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O error, 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use despeckle::io::{read_raster, write_raster};
use despeckle::metrics::{self, RegionSpec};
use despeckle::pipeline::{self, RunManifest};
use despeckle::{apply_speckle, Error, Looks, PipelineConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "despeckle", version, about = "Speckle removal for intensity images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Multiply a clean image by seeded L-look gamma speckle.
    AddNoise(AddNoise),
    /// Despeckle an intensity image and write its run manifest.
    Despeckle(Despeckle),
    /// Score an image and write the metrics as JSON.
    Evaluate(Evaluate),
    /// Speckle a clean image and compare the four weight/transform configurations.
    Ablate(Ablate),
}

#[derive(Debug, Args)]
struct AddNoise {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    looks: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Intensity mapped to 255 when writing PGM.
    #[arg(long, default_value_t = 255.0)]
    peak: f64,
}

#[derive(Debug, Args)]
struct Despeckle {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `key = value` file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    no_transform: bool,
    #[arg(long)]
    no_weights: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Manifest destination (default: `<out>.manifest.json`).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Re-run with the configuration stored in this manifest.
    #[arg(long, conflicts_with_all = ["config", "no_transform", "no_weights", "seed"])]
    replay: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Evaluate {
    #[arg(long)]
    test: PathBuf,
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    #[arg(long)]
    noisy: Option<PathBuf>,
    /// One `row col height width` rectangle per line, for ENL.
    #[arg(long)]
    regions: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = 255.0)]
    peak: f64,
}

#[derive(Debug, Args)]
struct Ablate {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    looks: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        e if e.is_io() => EXIT_IO,
        Error::Parameter(_) | Error::DimensionMismatch { .. } | Error::Region(_) => EXIT_USAGE,
        _ => EXIT_NUMERIC,
    }
}

fn load_config(path: Option<&Path>) -> despeckle::Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::from_file(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn default_manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> despeckle::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn add_noise(a: &AddNoise) -> despeckle::Result<()> {
    let clean = read_raster(&a.input)?;
    let noisy = apply_speckle(&clean, Looks::new(a.looks)?, a.seed)?;
    write_raster(&a.out, &noisy, a.peak)
}

fn run_despeckle(a: &Despeckle) -> despeckle::Result<()> {
    let noisy = read_raster(&a.input)?;
    let (out, manifest) = match &a.replay {
        Some(path) => {
            let stored = RunManifest::from_json(&fs::read_to_string(path)?)?;
            pipeline::replay(&noisy, &stored)?
        }
        None => {
            let mut cfg = load_config(a.config.as_deref())?;
            cfg.use_transform &= !a.no_transform;
            cfg.use_weights &= !a.no_weights;
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            pipeline::despeckle(&noisy, &cfg)?
        }
    };
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    write_raster(&a.out, &out, manifest.config.peak)?;
    let manifest_path = a.manifest.clone().unwrap_or_else(|| default_manifest_path(&a.out));
    fs::write(manifest_path, manifest.to_json()?)?;
    Ok(())
}

fn evaluate(a: &Evaluate) -> despeckle::Result<()> {
    let test = read_raster(&a.test)?;
    let reference = a.reference.as_deref().map(read_raster).transpose()?;
    let noisy = a.noisy.as_deref().map(read_raster).transpose()?;
    let regions = a.regions.as_deref().map(RegionSpec::read).transpose()?;
    let report = metrics::evaluate(&test, reference.as_ref(), noisy.as_ref(), regions.as_ref(), a.peak)?;
    write_json(&a.report, &report)
}

fn ablate(a: &Ablate) -> despeckle::Result<()> {
    let clean = read_raster(&a.input)?;
    let cfg = load_config(a.config.as_deref())?;
    let report = pipeline::run_ablation(&clean, Looks::new(a.looks)?, a.seed, &cfg, pipeline::threads_from_env())?;
    print!("{}", report.table());
    write_json(&a.report, &report)
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::AddNoise(a) => add_noise(a),
        Command::Despeckle(a) => run_despeckle(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Ablate(a) => ablate(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
