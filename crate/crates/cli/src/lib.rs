//! Experiment harness for LW-loss partial label learning: corpus generation,
//! training, evaluation, β sweeps and the consistency verification suite.

pub mod commands;
pub mod config;
pub mod pipeline;

pub use config::ExperimentConfig;
