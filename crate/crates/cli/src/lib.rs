//! Experiment runner: datasets, training runs, evaluation reports, the
//! ablation ladder and solve traces, all driven by one TOML config.

pub mod ablate;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod eval;
pub mod failure;
pub mod layout;
pub mod report;
pub mod run;
pub mod traces;

pub use config::{ExperimentConfig, OUTPUT_ROOT_ENV};
