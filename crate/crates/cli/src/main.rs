//! `byztree` command-line experiments.
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 when no cost
//! allocation fits the network budget, 4 when the normal approximation is
//! outside its domain, 1 for I/O failures.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, Overrides, Run};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "byztree", version, about = "Byzantine attacks on tree-structured detection networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the file, defaults to the working directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo trials; overrides the file.
    #[arg(long)]
    trials: Option<u64>,
    /// Grid resolution for the sweeps; overrides the file.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Divergence over the (p10, p01) flip grid at one coverage.
    AttackSurface(Common),
    /// Smallest divergence against coverage in [0, 0.5).
    CoverageCurve(Common),
    /// Solve the cost-allocation game and tabulate attack payoffs.
    Stackelberg(Common),
    /// Isolation probabilities of the anchor-based identification scheme.
    Identify(Common),
    /// Calibrated fusion experiment with optional replication slope.
    Fuse(Common),
}

type Handler = fn(&Run) -> commands::Result<Vec<PathBuf>>;

fn execute(command: &Command) -> Result<Vec<PathBuf>, CliError> {
    let (common, run): (&Common, Handler) = match command {
        Command::AttackSurface(c) => (c, commands::attack_surface),
        Command::CoverageCurve(c) => (c, commands::coverage_curve),
        Command::Stackelberg(c) => (c, commands::stackelberg),
        Command::Identify(c) => (c, commands::identify),
        Command::Fuse(c) => (c, commands::fuse),
    };
    let config = ExperimentConfig::load(&common.config)?;
    let out = common
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)?;
    let overrides = Overrides {
        seed: common.seed,
        trials: common.trials,
        grid: common.grid,
    };
    run(&Run {
        config: &config,
        overrides: &overrides,
        out: &out,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
