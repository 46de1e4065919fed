//! Command-line experiment runner.

pub mod commands;
pub mod config;
pub mod report;

use std::fs;
use std::path::Path;

pub use commands::{run_command, Outcome};
pub use config::{Command, ConfigError, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] etalab::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Writes every artifact of `outcome` into `dir`, one file at a time.
pub fn write_artifacts(outcome: &Outcome, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    for (name, content) in &outcome.artifacts {
        fs::write(dir.join(name), content)?;
    }
    Ok(())
}
