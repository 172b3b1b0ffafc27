//! Experiment harness: synthetic data, classifier and agent training,
//! evaluation with and without test-time augmentation, and the top-k sweep.

pub mod commands;
pub mod config;
pub mod error;
pub mod harness;
pub mod plot;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use harness::TtaMode;
