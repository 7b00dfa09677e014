//! `exquant` command-line front end.
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 for data
//! errors and 4 for numerical failures.

mod args;
mod commands;
mod data;
mod error;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    let outcome = match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Tail(a) => commands::tail(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Classify(a) => commands::classify(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("exquant: {e}");
            e.exit_code()
        }
    }
}
