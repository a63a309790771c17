//! File formats, experiment runners and the command-line front end for the
//! `twr-core` tree OT library.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod parallel;
pub mod runner;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
