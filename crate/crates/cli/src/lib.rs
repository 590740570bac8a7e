//! Batch front end: JSON run configurations, suite orchestration and
//! deterministic report and table emission for the `pphi2` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod suites;
pub mod tables;

pub use config::{RunConfig, Suite};
pub use error::{exit, CliError, Result};
pub use report::Report;
