//! Command-line front end: loads an experiment file, runs the selected mode
//! and writes CSV tables.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::PathBuf;

use config::{load_config, ConfigError, Overrides};
use experiments::{ExperimentRegistry, RunError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Run(RunError::Infeasible(_)) => EXIT_INFEASIBLE,
            Self::Run(RunError::Numerical(_)) => EXIT_NUMERICAL,
            Self::Io(_) => EXIT_IO,
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub stdout: String,
    pub written: Vec<PathBuf>,
}

/// Loads `path` with `overrides` applied, runs the configured mode and
/// writes its tables.
pub fn execute(path: &std::path::Path, overrides: &Overrides) -> Result<Outcome, CliError> {
    let cfg = load_config(path, overrides)?;
    let registry = ExperimentRegistry::default();
    let mode = registry.get(cfg.run.mode.as_str()).expect("every validated mode is registered");
    let report = mode.run(&cfg)?;
    let written = output::write_all(&cfg.out_dir, &report.artifacts)?;
    Ok(Outcome { stdout: report.stdout, written })
}
