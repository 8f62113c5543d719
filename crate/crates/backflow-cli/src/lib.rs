//! Command-line driver for the `backflow` library: run configuration,
//! archives, the verbs themselves and the self-check suite.

pub mod archive;
pub mod commands;
pub mod config;
pub mod error;
pub mod verify;

pub use config::{Cli, Command, CommonArgs, RunConfig};
pub use error::{CliError, CliResult};
