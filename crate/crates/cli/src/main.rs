mod commands;
mod config;
mod error;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{DescribeArgs, EvaluateArgs, ExtractArgs, SimulateArgs};

/// Simulate pendulum models and train, evaluate and inspect NeuralFMUs.
#[derive(Debug, Parser)]
#[command(name = "neuralfmu", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a built-in model and write its trajectory as CSV.
    Simulate(SimulateArgs),
    /// Train a NeuralFMU from a TOML run config.
    Train { config: PathBuf },
    /// Roll out reference, FMU and NeuralFMU on a scenario.
    Evaluate(EvaluateArgs),
    /// Extract the learned friction or displacement from a checkpoint.
    Extract(ExtractArgs),
    /// Print a model description.
    Describe(DescribeArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(error::EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Train { config } => commands::train(config),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Extract(a) => commands::extract(a),
        Command::Describe(a) => commands::describe(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
