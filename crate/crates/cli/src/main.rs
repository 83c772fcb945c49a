use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use raysep::bench::{detect_peaks, run_experiment, ExperimentPlan, DEFAULT_PEAK_FLOOR};
use raysep::estimate::Estimator;
use raysep::simulator::NoiseSpec;
use serde::Serialize;
use sha2::{Digest, Sha256};

mod config;
mod io;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "raysep", version, about = "Raypath direction estimation on vertical line arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads (defaults to all cores)
    #[arg(long, global = true, env = "RAYSEP_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize snapshots and ground truth from a run config
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate arrival angles from a snapshot file
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte-Carlo RMSE experiment
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<raysep::Error> for CliError {
    fn from(e: raysep::Error) -> Self {
        match e {
            raysep::Error::Domain(_) | raysep::Error::Dimension(_) => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

struct Loaded<T> {
    value: T,
    hash: String,
}

fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Loaded<T>> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut de = serde_json::Deserializer::from_slice(&bytes);
    let value = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| CliError::Validation(format!("{}: at `{}`: {}", path.display(), e.path(), e.inner())))?;
    let hash = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    Ok(Loaded { value, hash })
}

fn provenance(hash: &str, seed: u64) -> Vec<String> {
    vec![format!(
        "raysep {} config_sha256={hash} seed={seed}",
        env!("CARGO_PKG_VERSION")
    )]
}

#[derive(Serialize)]
struct Provenance<'a, T> {
    provenance: &'a str,
    #[serde(flatten)]
    body: T,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, header: &[String], body: T) -> Result<()> {
    let doc = Provenance {
        provenance: &header[0],
        body,
    };
    let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Numerical(e.to_string()))?;
    write(path, &(text + "\n"))
}

fn output_dir(out: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    let dir = out
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| CliError::Validation("no output directory: pass --out or set output_dir".into()))?;
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn simulate(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let Loaded { value: cfg, hash } = load::<RunConfig>(config)?;
    cfg.validate()?;
    let seed = seed.unwrap_or(cfg.seed);
    let truth = cfg.scenario.truth()?;
    let bins = cfg.scenario.synthesize(&truth, NoiseSpec::new(cfg.snr_db, seed))?;
    let dir = output_dir(out, &cfg)?;
    let header = provenance(&hash, seed);
    write(&dir.join("snapshots.csv"), &io::write_snapshots(&header, &bins))?;
    write_json(&dir.join("truth.json"), &header, raysep::scenario::GroundTruth::from(&truth))
}

fn estimate(config: &Path, snapshots: &Path, out: Option<PathBuf>) -> Result<()> {
    let Loaded { value: cfg, hash } = load::<RunConfig>(config)?;
    cfg.validate()?;
    if cfg.algorithms.is_empty() {
        return Err(CliError::Validation("no algorithms selected".into()));
    }
    let text = fs::read_to_string(snapshots).map_err(|e| CliError::Io(format!("{}: {e}", snapshots.display())))?;
    let bins = io::read_snapshots(&text).map_err(|e| CliError::Validation(format!("{}: {e}", snapshots.display())))?;
    let grid = cfg.scenario.grid()?;
    let geom = cfg.scenario.geometry;
    let mut est_cfg = cfg.estimator;
    est_cfg.num_paths = cfg.scenario.truth()?.len();
    let estimator = Estimator::new(&bins, &grid, &geom, est_cfg)?;

    let dir = output_dir(out, &cfg)?;
    let header = provenance(&hash, cfg.seed);
    let mut peaks = BTreeMap::new();
    for &algorithm in &cfg.algorithms {
        let e = estimator.run(algorithm)?;
        write(
            &dir.join(format!("spectrum_{algorithm}.csv")),
            &io::write_spectrum(&header, grid.angles(), &e.values),
        )?;
        peaks.insert(
            algorithm.name(),
            detect_peaks(&e.values, &grid, est_cfg.num_paths, DEFAULT_PEAK_FLOOR).angles,
        );
    }
    write_json(&dir.join("peaks.json"), &header, peaks)
}

fn bench(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let Loaded { value: mut plan, hash } = load::<ExperimentPlan>(config)?;
    if let Some(seed) = seed {
        plan.seed = seed;
    }
    plan.validate()?;
    let report = run_experiment(&plan)?;
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let header = provenance(&hash, plan.seed);
    write(&out.join("report.csv"), &report.to_csv(&header))?;
    write_json(&out.join("report.json"), &header, &report)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Numerical(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate { config, out, seed } => simulate(&config, out, seed),
        Command::Estimate { config, snapshots, out } => estimate(&config, &snapshots, out),
        Command::Bench { config, out, seed } => bench(&config, &out, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
