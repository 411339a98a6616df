//! Building blocks of the `monogp` command-line tool: CSV ingestion, input
//! coding, configuration files, chain persistence and the four subcommands.

pub mod chainfile;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;

pub use error::{CliError, CliResult};
