//! Library surface of the `decunif` binary: config schema, metrics plumbing,
//! and the subcommand implementations, kept out of main.rs so integration
//! tests can drive them directly.

pub mod commands;
pub mod config;
pub mod error;
pub mod metrics;

pub use config::{ConfigError, ExperimentConfig};
pub use error::CliError;
