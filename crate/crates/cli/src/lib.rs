//! Experiment runner: strict configs, the solve → check pipeline, run
//! manifests and summary reports.

pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod report;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig};
pub use manifest::{FileEntry, RunManifest};
pub use pipeline::{CheckOutcome, Criterion, Status};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("config {path}: {source}")]
    Schema { path: PathBuf, source: ConfigError },

    #[error("run directory {0} is locked by another process")]
    Locked(PathBuf),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema { .. } => EXIT_SCHEMA,
            CliError::Io { .. } | CliError::Locked(_) => EXIT_IO,
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Reads and validates a config file; the run name is the file stem.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, String), CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    let cfg = ExperimentConfig::parse(&text, &name).map_err(|source| CliError::Schema { path: path.to_path_buf(), source })?;
    Ok((cfg, text))
}

pub use manifest::run;
