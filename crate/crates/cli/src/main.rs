//! `nodemixup` command-line tool.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use args::{ConvertArgs, DiagnoseArgs, GradcheckArgs, SplitArgs, SweepArgs, SynthArgs, TrainArgs};

#[derive(Debug, Parser)]
#[command(
    name = "nodemixup",
    version,
    about = "NodeMixup training and under-reaching diagnostics"
)]
struct Cli {
    /// More log output (repeatable); RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a stochastic block model dataset.
    Synth(SynthArgs),
    /// Convert a LINQS `.content`/`.cites` pair into a dataset directory.
    Convert(ConvertArgs),
    /// Copy a dataset with a freshly sampled per-class split.
    Split(SplitArgs),
    /// Train over several seeds and report test accuracy.
    Train(TrainArgs),
    /// Reachability and representation diagnostics.
    Diagnose(DiagnoseArgs),
    /// Finite-difference gradient check on a small random graph.
    Gradcheck(GradcheckArgs),
    /// Grid search over NodeMixup hyperparameters.
    Sweep(SweepArgs),
}

/// Invalid arguments discovered after parsing; exits with code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Convert(a) => commands::convert(a),
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a),
        Command::Diagnose(a) => commands::diagnose(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(code) => code,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
