//! File formats, run configuration and subcommands of the `rfcd` tool.

pub mod commands;
pub mod config;
mod error;
pub mod mbif;
pub mod pgm;
pub mod sidecar;

pub use error::{CliError, CliResult};
