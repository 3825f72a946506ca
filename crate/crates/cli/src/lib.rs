//! Configuration loading and subcommands of the `robustpath` binary.

pub mod commands;
pub mod config;
