//! Experiment driver: configuration files, the train/eval/grid/ablate/smoke
//! entry points, metric computation and artifact export.

pub mod config;
pub mod metrics;
pub mod run;

pub use config::ExperimentConfig;
pub use run::{ablate, eval, grid, smoke, train_cmd, RunError};
