//! `vocab-mixin`: command-line front end for vocabulary augmentation,
//! transliteration, coverage analysis, continued pretraining and probing.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 I/O error.

mod args;
mod commands;
mod config;
mod manifest;
mod report;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use crate::args::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VOCAB_MIXIN_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    // Usage problems (including no arguments) go to stderr.
                    eprint!("{}", e.render().ansi());
                    ExitCode::from(1)
                }
            };
        }
    };
    if !matches!(cli.command, Command::Compare(_)) {
        // Only `compare` runs in parallel.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    }
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
