//! `maqc`: state preparation, oracle checks, dataset generation, locality
//! analysis, and diffusion-model training and sampling.

// `!(x > 0.0)` guards are written to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "maqc", version, about = "Measurement-altered Ising criticality pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Prepare the critical ground state and the ancilla paramagnet.
    Prepare,
    /// Compare the effective operators with the exact two-chain simulation.
    OracleCheck,
    /// Build a labeled RDM dataset.
    Dataset,
    /// Flip-variance profiles and off-diagonal scatter tables.
    Analyze,
    /// Train the conditional diffusion model on a dataset.
    Train,
    /// Sample RDMs from a trained model.
    Generate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Prepare => "prepare",
            Command::OracleCheck => "oracle-check",
            Command::Dataset => "dataset",
            Command::Analyze => "analyze",
            Command::Train => "train",
            Command::Generate => "generate",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Core(maqc_core::Error),
    Config(String),
    Check(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Config(format!("{}: {e}", path.display()))
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config(_) => "config",
            CliError::Check(_) => "check_failed",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Config(m) | CliError::Check(m) => f.write_str(m),
        }
    }
}

impl From<maqc_core::Error> for CliError {
    fn from(e: maqc_core::Error) -> Self {
        CliError::Core(e)
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&cli.overrides)?;
    if let Some(threads) = cli.overrides.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Prepare => commands::prepare(&cfg),
        Command::OracleCheck => commands::oracle_check(&cfg),
        Command::Dataset => commands::dataset(&cfg),
        Command::Analyze => commands::analyze(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Generate => commands::generate(&cfg),
    }?;
    cfg.write_manifest(cli.command.name())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({
                "error": { "command": cli.command.name(), "kind": e.kind(), "message": e.to_string() }
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
