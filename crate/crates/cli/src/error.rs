use std::path::Path;

use thiserror::Error;

use crate::checkpoint::CheckpointError;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An input file is missing or unreadable.
    #[error("cannot read {path}: {msg}")]
    Input { path: String, msg: String },

    #[error("cannot write {path}: {msg}")]
    Output { path: String, msg: String },

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error(transparent)]
    Core(#[from] adadfq::Error),
}

impl CliError {
    pub fn input(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Input {
            path: path.display().to_string(),
            msg: err.to_string(),
        }
    }

    pub fn output(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Output {
            path: path.display().to_string(),
            msg: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        use adadfq::Error as E;
        match self {
            CliError::Config(_) | CliError::Input { .. } | CliError::Checkpoint(_) => EXIT_USAGE,
            CliError::Core(E::Config(_) | E::Io { .. } | E::Parse { .. } | E::EmptyDataset(_)) => EXIT_USAGE,
            CliError::Output { .. } | CliError::Core(_) => EXIT_RUNTIME,
        }
    }
}
