//! The `pvb` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 solver not converged
//! (`denoise`), 3 workflow not certified within the level cap.

use std::ffi::OsString;
use std::path::Path;

use clap::Parser;

pub mod args;
pub mod commands;
pub mod io;
pub mod noise;
pub mod synth;

use args::{merge, Cli, Command};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Failure = 1,
    NotConverged = 2,
    Uncertified = 3,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] pvb::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub fn execute(command: Command) -> Result<Exit, CliError> {
    match command {
        Command::Denoise(a) => commands::denoise(&merge(&a, a.config.as_deref())?),
        Command::Train(a) => commands::train(&merge(&a, a.config.as_deref())?),
        Command::Workflow(a) => commands::workflow(&merge(&a, a.config.as_deref())?),
        Command::Landscape(a) => commands::landscape_cmd(&merge(&a, a.config.as_deref())?),
        Command::Synth(a) => commands::synth(&merge(&a, a.config.as_deref())?),
        Command::AddNoise(a) => commands::add_noise(&merge(&a, a.config.as_deref())?),
    }
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                Exit::Failure as i32
            } else {
                0
            };
        }
    };
    match execute(cli.command) {
        Ok(exit) => exit as i32,
        Err(e) => {
            eprintln!("error: {e}");
            Exit::Failure as i32
        }
    }
}
