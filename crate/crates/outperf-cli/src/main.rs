//! Command-line front end for the outperformance testing library.
//!
//! Usage: `outperf CONFIG [--seed N] [--output PATH]`. The config file
//! selects one of nine subcommands and carries all of its parameters; see
//! `config.rs` for the document schema. On success the artifact is written
//! and a one-line summary goes to stdout. Exit codes: 0 on success, 1 for
//! input or configuration errors (the message names the offending field or
//! path), 2 for numerical failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

#[derive(Parser)]
#[command(
    name = "outperf",
    about = "Outperformance test values, hedging curves, and HJB solves",
    version
)]
struct Cli {
    /// Path to the JSON run configuration.
    config: PathBuf,
    /// Overrides the seed field of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output field of the configuration.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli.config, cli.seed, cli.output) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
