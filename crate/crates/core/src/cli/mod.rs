//! Command-line front end of the `thermometry` binary.
//!
//! Every subcommand accepts the same scenario flags; a JSON file given with
//! `--config` supplies defaults and explicit flags override it.

mod commands;
mod config;
mod output;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use config::{Format, Preset, RawConfig, RunConfig};
pub use validate::{run_checks, CheckOutcome};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Model(#[from] crate::Error),
    #[error("validation failed: {0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Model(crate::Error::Domain(_)) => 2,
            CliError::Io { .. } => 3,
            CliError::Model(_) | CliError::Validation(_) => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

const PRECEDENCE: &str = "Precedence: explicit flags override values from --config, which override preset values.";

#[derive(Debug, Parser)]
#[command(name = "thermometry", version, about = "Quantum Fisher information of a thermalizing probe", after_help = PRECEDENCE)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// QFI time trace of one initial state, or of a preset family of states.
    #[command(after_help = PRECEDENCE)]
    Trace(RawConfig),
    /// Rank initial states (a, r) by their best QFI over time.
    #[command(after_help = PRECEDENCE)]
    Optimize(RawConfig),
    /// Cold/hot bath traces for the experimental parameters and the
    /// amplitude-damping comparison table.
    #[command(after_help = PRECEDENCE)]
    Experiment(RawConfig),
    /// Monte Carlo check of the Cramér–Rao bound for energy measurements.
    #[command(after_help = PRECEDENCE)]
    Estimate(RawConfig),
    /// Run the invariant suite and print a pass/fail table.
    #[command(after_help = PRECEDENCE)]
    Validate(RawConfig),
}

/// Runs a parsed command line, returning the process exit code.
pub fn run(cli: Cli) -> u8 {
    let result = match cli.command {
        Command::Trace(raw) => RunConfig::load(raw).and_then(|c| commands::trace(&c)),
        Command::Optimize(raw) => RunConfig::load(raw).and_then(|c| commands::optimize(&c)),
        Command::Experiment(raw) => RunConfig::load(raw).and_then(|c| commands::experiment(&c)),
        Command::Estimate(raw) => RunConfig::load(raw).and_then(|c| commands::estimate(&c)),
        Command::Validate(raw) => RunConfig::load(raw).and_then(|c| commands::validate(&c)),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main_entry() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    ExitCode::from(run(cli))
}
