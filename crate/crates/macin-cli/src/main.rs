//! Command-line surface: corpus ingestion, cross-validated training,
//! claim extraction with attention export, evaluation, and the
//! finite-difference verification utility.
//!
//! Exit codes are stable: 0 ok, 2 input/schema, 3 training, 4 checkpoint,
//! 5 verification failure.

mod commands;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_TRAINING: u8 = 3;
pub const EXIT_CHECKPOINT: u8 = 4;
pub const EXIT_VERIFICATION: u8 = 5;

/// Error carrying the exit code class it maps to.
pub struct CmdError {
    pub code: u8,
    pub message: String,
}

impl CmdError {
    pub fn input(err: impl std::fmt::Display) -> Self {
        CmdError {
            code: EXIT_INPUT,
            message: err.to_string(),
        }
    }

    pub fn training(err: impl std::fmt::Display) -> Self {
        CmdError {
            code: EXIT_TRAINING,
            message: err.to_string(),
        }
    }

    pub fn checkpoint(err: impl std::fmt::Display) -> Self {
        CmdError {
            code: EXIT_CHECKPOINT,
            message: err.to_string(),
        }
    }

    pub fn verification(err: impl std::fmt::Display) -> Self {
        CmdError {
            code: EXIT_VERIFICATION,
            message: err.to_string(),
        }
    }
}

impl From<anyhow::Error> for CmdError {
    fn from(err: anyhow::Error) -> Self {
        CmdError::input(format!("{err:#}"))
    }
}

#[derive(Parser)]
#[command(name = "macin", version, about = "Headline-relevance claim identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a corpus into the canonical article format
    Ingest(commands::ingest::IngestArgs),
    /// Train with k-fold cross-validation, writing checkpoints and logs
    Train(commands::train::TrainArgs),
    /// Rank sentences by headline relevance with a trained model
    Extract(commands::extract::ExtractArgs),
    /// Score predictions against gold claims
    Eval(commands::eval::EvalArgs),
    /// Verify model gradients against finite differences at toy scale
    Gradcheck(commands::gradcheck::GradcheckArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(args) => commands::ingest::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Extract(args) => commands::extract::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Gradcheck(args) => commands::gradcheck::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}
