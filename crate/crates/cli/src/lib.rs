//! Command-line harness around the `mcpd` detector: synthetic data, detection
//! runs, the benchmark grid and the mixture-model pipeline.

pub mod bench;
pub mod commands;
mod error;
pub mod svg;

pub use commands::{Cli, Command};
pub use error::CliError;
