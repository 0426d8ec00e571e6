//! Experiment runner for `smpc-core`: JSON configuration, parallel drivers,
//! CSV/JSON/SVG output and the `smpc` command line.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod export;
pub mod parallel;
pub mod svg;

pub use config::{ConfigError, ExperimentConfig};
pub use error::{AppError, Result};
pub use experiment::Experiment;
