//! `bsi`: train, sample, evaluate and run desk-scale studies.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod commands;
mod common;

use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};

use commands::{data, eval, sample, study, train};
use common::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "bsi",
    version,
    about = "Bayesian sample inference at desk scale"
)]
struct Cli {
    /// Worker threads; results do not depend on this
    #[arg(long, global = true, env = "BSI_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the MLP predictor and write a checkpoint
    Train(train::TrainArgs),
    /// Generate samples from a checkpoint
    Sample(sample::SampleArgs),
    /// Estimate bits per dimension on a synthetic dataset
    Eval(eval::EvalArgs),
    /// Desk-scale studies written as tidy CSV
    #[command(subcommand)]
    Study(study::StudyCommand),
    /// Generate and export a synthetic dataset
    Data(data::DataArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(common::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.into()))?;
    }
    match &cli.command {
        Command::Train(a) => train::run(a),
        Command::Sample(a) => sample::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Study(a) => study::run(a),
        Command::Data(a) => data::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
        Err(e @ CliError::Runtime(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
