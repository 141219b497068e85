//! `qrcd`: run, analyse and verify quantized randomized coordinate descent.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "qrcd", version, about = "Quantized randomized coordinate descent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// TOML file whose keys mirror the flag names (flags take precedence)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    experiment: ExperimentConfig,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run and write the trajectory CSV plus JSON metadata
    Run(Shared),
    /// Write the closed-form convergence report as JSON
    Theory(Shared),
    /// Replicate runs and check the empirical convergence guarantee
    Montecarlo(Shared),
    /// Write a seeded synthetic regression dataset
    Synth(Shared),
}

impl Shared {
    fn resolve(self) -> Result<ExperimentConfig, CliError> {
        match &self.config {
            Some(path) => Ok(self.experiment.over(ExperimentConfig::load_file(path)?)),
            None => Ok(self.experiment),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(s) => s.resolve().and_then(|c| commands::cmd_run(&c)),
        Command::Theory(s) => s.resolve().and_then(|c| commands::cmd_theory(&c)),
        Command::Montecarlo(s) => s.resolve().and_then(|c| commands::cmd_montecarlo(&c)),
        Command::Synth(s) => s.resolve().and_then(|c| commands::cmd_synth(&c)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qrcd: {e}");
            ExitCode::from(e.class.exit_code() as u8)
        }
    }
}
