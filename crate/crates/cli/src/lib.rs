//! Command-line experiment runner: loads a JSON configuration, runs one of
//! the `rates`, `clt`, `coverage` or `compare` experiments and writes CSV and
//! JSON results.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};

pub use config::{ExperimentConfig, ExperimentKind, Prepared};
pub use experiments::{run_experiment, Report};
pub use output::{emit_summary, Summary};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure ({context}): {source}")]
    Numerical {
        context: String,
        #[source]
        source: vrclt_core::Error,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for configuration errors, 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } => 3,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub sets: Vec<String>,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    /// 0 picks the rayon default.
    pub workers: usize,
}

/// Loads, validates and seeds a configuration without running anything.
pub fn prepare(experiment: ExperimentKind, opts: &RunOptions) -> Result<Prepared, CliError> {
    let cfg = config::load(opts.config.as_deref(), &opts.sets)?;
    let env = std::env::var(config::SEED_ENV).ok();
    let seed = config::resolve_seed(opts.seed, cfg.seed, env.as_deref())?;
    cfg.prepare(experiment, seed)
}

/// Runs `p` on a pool of `workers` threads.
pub fn execute(p: &Prepared, workers: usize) -> Result<Report, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| run_experiment(p))
}

pub fn write_files(report: &Report, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out_dir)?;
    report
        .files
        .iter()
        .map(|f| {
            let path = out_dir.join(&f.name);
            std::fs::write(&path, &f.contents)?;
            Ok(path)
        })
        .collect()
}

/// Full pipeline; files are written only after the experiment succeeds.
pub fn run(experiment: ExperimentKind, opts: &RunOptions) -> Result<Report, CliError> {
    let prepared = prepare(experiment, opts)?;
    let report = execute(&prepared, opts.workers)?;
    write_files(&report, &opts.out_dir)?;
    Ok(report)
}
