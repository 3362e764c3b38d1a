//! File formats, evaluation harness and command line around `triage-core`.

pub mod cache;
pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod eval;
pub mod runconfig;
pub mod squad;

pub use error::CliError;
