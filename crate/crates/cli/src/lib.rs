//! `tslab` command-line harness: typical-set verification, TS sampling
//! statistics, training, attacks, probes and evaluation, each writing CSVs
//! and a manifest of the resolved config into an output directory.

pub mod commands;
pub mod config;
pub mod error;

pub use config::ExperimentConfig;
pub use error::CliError;

use clap::{Parser, ValueEnum};
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Verify,
    Sample,
    Train,
    Attack,
    Probe,
    Eval,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Sample => "sample",
            Command::Train => "train",
            Command::Attack => "attack",
            Command::Probe => "probe",
            Command::Eval => "eval",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tslab", version, about = "Typical-set experiments on Gaussian denoisers")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// TOML experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the global seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (overrides `out` in the config; default `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Load the config, apply flag overrides, and run the command.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    cfg.out = Some(out.clone());
    commands::execute(cli.command, &cfg, &out)
}
