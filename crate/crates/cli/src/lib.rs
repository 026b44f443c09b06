//! Command-line driver: configuration loading, subcommands and file output.

pub mod commands;
pub mod config;
pub mod output;
