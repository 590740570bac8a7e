use std::path::Path;

use thiserror::Error;

/// Process exit codes. Stable across releases.
pub mod exit {
    pub const OK: i32 = 0;
    /// At least one check failed or could not be evaluated.
    pub const FAILED: i32 = 1;
    /// The configuration or the command line is invalid.
    pub const CONFIG: i32 = 2;
    /// An artifact could not be written.
    pub const IO: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}:{column}: {msg}")]
    ConfigSyntax { path: String, line: usize, column: usize, msg: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] pphi2_core::Error),
    #[error(transparent)]
    Fock(#[from] pphi2_fock::FockError),
    #[error(transparent)]
    Schwinger(#[from] pphi2_schwinger::SchwingerError),
    #[error("{} check(s) failed", .0.len())]
    Failed(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigSyntax { .. } | CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } | CliError::Csv(_) | CliError::Json(_) => exit::IO,
            CliError::Core(_) | CliError::Fock(_) | CliError::Schwinger(_) | CliError::Failed(_) => exit::FAILED,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

/// Turns a library error raised while validating user input into a
/// configuration error.
pub fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

pub type Result<T> = std::result::Result<T, CliError>;
