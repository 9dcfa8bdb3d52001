//! `rcoda` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid usage.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Error caused by the request rather than by the run itself.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "rcoda", version, about = "Potts model inference with recursive conditional decompositions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// JSON file with settings (or a previous run's manifest); flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a Potts field by Gibbs sampling.
    Simulate(commands::SimulateArgs),
    /// Sample the posterior of the interaction strength for an observed field.
    Fit(commands::FitArgs),
    /// Build a thermodynamic-integration table of log C(beta).
    TdiTable(commands::TdiTableArgs),
    /// Run a replicate study from a spec file or preset.
    Experiment(commands::ExperimentArgs),
    /// Segment a grayscale image with a hidden Potts model.
    Hmrf(commands::HmrfArgs),
    /// Print the decomposition plan of a lattice as JSON.
    PlanDump(commands::PlanDumpArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| {
        e.downcast_ref::<UsageError>().is_some()
            || e.downcast_ref::<rcoda::Error>().is_some_and(rcoda::Error::is_usage)
    });
    if usage {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::TdiTable(a) => commands::tdi_table(a),
        Command::Experiment(a) => commands::experiment(a),
        Command::Hmrf(a) => commands::hmrf(a),
        Command::PlanDump(a) => commands::plan_dump(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
