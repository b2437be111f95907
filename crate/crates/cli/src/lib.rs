//! The `jitlab` command line and the curation HTTP API.

pub mod api;
pub mod commands;

pub use commands::{main_with, Cli, CliError};
