//! Command-line driver: distance matrices, projection, evaluation and
//! retrieval, with persisted and cached intermediates.

pub mod artifacts;
pub mod cache;
pub mod commands;
pub mod config;

use std::ffi::OsString;

use clap::Parser;

use config::{resolve, Cli, Command};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Run(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Run(e) => write!(f, "{e:#}"),
        }
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I, env_workers: Option<String>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = resolve(cli.command.args(), env_workers).and_then(|cfg| match &cli.command {
        Command::Distances(_) => commands::cmd_distances(&cfg),
        Command::Project(_) => commands::cmd_project(&cfg),
        Command::EvalKnn(_) => commands::cmd_eval_knn(&cfg),
        Command::EvalSvm(_) => commands::cmd_eval_svm(&cfg),
        Command::Pipeline(_) => commands::cmd_pipeline(&cfg),
        Command::Neighbours(_) => commands::cmd_neighbours(&cfg),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => EXIT_USAGE,
                CliError::Run(_) => EXIT_RUNTIME,
            }
        }
    }
}
