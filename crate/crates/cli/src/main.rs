//! `volsurf`: run, verify and sweep bulk-surface reaction-diffusion
//! experiments from a JSON config.
//!
//! Exit codes: 0 success, 1 invariant violation, 2 usage error,
//! 3 numerical or I/O failure.

mod commands;
mod config;
mod error;
mod output;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::verify::Suite;

#[derive(Parser)]
#[command(name = "volsurf", version, about = "Bulk-surface reaction-diffusion solver and verifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized suites (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Final time (overrides `t_end`).
    #[arg(long = "t-end")]
    t_end: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate and write the diagnostics series.
    Simulate(Common),
    /// Print the equilibrium carrying the initial mass.
    Equilibrium(Common),
    /// Run the monotone upper/lower iteration.
    Monotone {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        outer_tol: Option<f64>,
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Run a property suite and write a verdict file.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        suite: Suite,
    },
    /// Simulate over a parameter grid and aggregate rate fits.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// JSON object mapping parameter names to value lists.
        #[arg(long)]
        grid: PathBuf,
    },
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    cfg.manifest = None;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(t) = common.t_end {
        cfg.t_end = t;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(common) => commands::simulate(&load(&common)?),
        Command::Equilibrium(common) => commands::equilibrium(&load(&common)?),
        Command::Monotone { common, outer_tol, k_max } => {
            let mut cfg = load(&common)?;
            let mut mono = cfg.monotone.unwrap_or_default();
            if let Some(t) = outer_tol {
                mono.outer_tol = t;
            }
            if let Some(k) = k_max {
                mono.k_max = k;
            }
            cfg.monotone = (outer_tol.is_some() || k_max.is_some() || cfg.monotone.is_some()).then_some(mono);
            commands::monotone(&cfg)
        }
        Command::Verify { common, suite } => verify::verify(&load(&common)?, suite),
        Command::Sweep { common, grid } => {
            let cfg = load(&common)?;
            commands::sweep(&cfg, &commands::ParamGrid::load(&grid)?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
