mod commands;
mod config;
mod reproduce;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

/// Exit code 1 for rejected configs, 2 for failures inside an analysis.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Analysis(String),
}

#[derive(Parser)]
#[command(
    name = "lcc",
    version,
    about = "Mixed-traffic cruise-control analysis: car-following linearization, \
             controllability checks, head-to-tail string stability, feedback-gain \
             region charts, and time-domain simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Directory artifacts are written into
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for region scans (default: one per core)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Accepted for interface stability; the pipeline is deterministic and
    /// draws no randomness, so the value is ignored
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Resolve the equilibrium spacing/velocity pair of the driver model
    Equilibrium(ConfigArg),
    /// Linearize the driver model around its equilibrium
    Linearize(ConfigArg),
    /// Assemble the open-loop state-space matrices
    Build(ConfigArg),
    /// Check controllability by Kalman rank and eigenvalue margins
    Ctrb(ConfigArg),
    /// Head-to-tail string-stability verdict plus a magnitude sweep CSV
    SsCheck(ConfigArg),
    /// Classify string/plant stability over a 2-D feedback-gain grid
    Scan(ConfigArg),
    /// Integrate the response to a head-vehicle perturbation
    Simulate(ConfigArg),
    /// Run every bundled scenario end-to-end into the output directory
    Reproduce,
}

#[derive(Args)]
struct ConfigArg {
    /// Scenario config, JSON with schema "lcc-scenario/1"
    #[arg(long, visible_alias = "spec")]
    config: PathBuf,
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let out = cli.out.as_path();
    let load = |arg: &ConfigArg| config::load_config(&arg.config);
    match &cli.command {
        Command::Equilibrium(a) => commands::run_equilibrium(&load(a)?, out),
        Command::Linearize(a) => commands::run_linearize(&load(a)?, out),
        Command::Build(a) => commands::run_build(&load(a)?, out),
        Command::Ctrb(a) => commands::run_ctrb(&load(a)?, out),
        Command::SsCheck(a) => commands::run_ss_check(&load(a)?, out),
        Command::Scan(a) => commands::run_scan(&load(a)?, out),
        Command::Simulate(a) => commands::run_simulate(&load(a)?, out),
        Command::Reproduce => reproduce::run_reproduce(out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Only the first global-pool build can win; later calls are no-ops.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Analysis(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
