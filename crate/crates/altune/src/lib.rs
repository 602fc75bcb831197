//! Command-line front end for `altune-core`: configuration, versioned file
//! formats and the `gen-data`, `train`, `tune` and `report` subcommands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod formats;

pub use config::{ExperimentConfig, OUT_ENV};
