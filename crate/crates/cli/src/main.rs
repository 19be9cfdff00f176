//! `switchgrid <solve|converge|simulate|verify|oracle> --config <file>`
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 verification failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use switchgrid::{Error, Result};

use crate::config::{config_error, RunConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "switchgrid", version, about = "Penalized solver for state-constrained optimal switching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Model file; overrides the config's model.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Penalty level; overrides the config's `penalty.n`.
    #[arg(long, global = true)]
    n: Option<u32>,
    /// Penalty ladder, comma separated; overrides `penalty.ladder`.
    #[arg(long, global = true, value_delimiter = ',')]
    ladder: Option<Vec<u32>>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for simulation and verification sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Solve at one penalty level and write the value field.
    Solve,
    /// Solve along a penalty ladder and report monotone convergence.
    Converge,
    /// Simulate the extracted policy and estimate its payoff.
    Simulate,
    /// Run the invariant suite on solved fields.
    Verify,
    /// Write closed-form and exhaustive-lattice reference values.
    Oracle,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Json(_) | Error::Io(_) | Error::Validation { .. } | Error::Extrapolation { .. } => {
            EXIT_CONFIG
        }
        Error::CflViolated { .. } | Error::Divergence { .. } | Error::Internal(_) => EXIT_NUMERIC,
    }
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &cli.model {
        cfg.model = Some(m.clone());
    }
    if let Some(n) = cli.n {
        cfg.penalty.n = n;
    }
    if let Some(l) = &cli.ladder {
        cfg.penalty.ladder = Some(l.clone());
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        if let Some(sim) = cfg.simulation.as_mut() {
            sim.seed = seed;
        }
        cfg.verify.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<u8> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(config_error("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    }
    let cfg = config(cli)?;
    match cli.command {
        Command::Solve => commands::cmd_solve(cfg),
        Command::Converge => commands::cmd_converge(cfg),
        Command::Simulate => commands::cmd_simulate(cfg),
        Command::Verify => commands::cmd_verify(cfg),
        Command::Oracle => commands::cmd_oracle(cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SWITCHGRID_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
