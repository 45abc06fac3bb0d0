//! Command-line front end: every pipeline stage as a subcommand, plus a
//! `pipeline` command that runs them all and writes a digest manifest.
//!
//! Exit codes: 0 on success, 1 when a stage fails internally, 2 for bad
//! input or configuration.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod stages;

pub use commands::{run, Cli};
pub use config::{RunConfig, Scenario};
pub use error::{CliError, CliResult};
