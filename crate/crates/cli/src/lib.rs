//! Experiment front-end: configuration, drivers and file emitters.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::ExperimentConfig;
pub use error::CliError;
