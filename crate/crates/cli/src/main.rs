use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vrclt_cli::{emit_summary, run, ExperimentKind, RunOptions};

#[derive(Parser, Debug)]
#[command(name = "vrclt", version, about = "Variance-reduced SGD experiments: rates, limit laws and confidence regions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mean-squared error per step against the theoretical bound
    Rates(Common),
    /// Rescaled terminal errors against their limiting normal law
    Clt(Common),
    /// Coverage of Hotelling confidence regions over an (n, N_max) grid
    Coverage(Common),
    /// Error against oracle calls for every method, SGD baseline included
    Compare(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON configuration file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override a configuration entry, e.g. `--set coverage.meta_reps=200`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,

    #[arg(long, value_name = "DIR", default_value = "out")]
    out_dir: PathBuf,

    /// Takes precedence over the config file and VRCLT_SEED
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads (0 = one per core)
    #[arg(long, default_value_t = 0)]
    workers: usize,

    /// Do not print the summary table
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::Rates(c) => (ExperimentKind::Rates, c),
        Command::Clt(c) => (ExperimentKind::Clt, c),
        Command::Coverage(c) => (ExperimentKind::Coverage, c),
        Command::Compare(c) => (ExperimentKind::Compare, c),
    };
    let opts = RunOptions {
        config: common.config,
        sets: common.sets,
        out_dir: common.out_dir,
        seed: common.seed,
        workers: common.workers,
    };
    match run(kind, &opts) {
        Ok(report) => {
            if !common.quiet {
                print!("{}", emit_summary(&report.summary));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("vrclt {kind}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
