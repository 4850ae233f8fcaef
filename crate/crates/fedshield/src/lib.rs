//! Experiment harness for the trust-aware federated defense: config files,
//! dataset CSV import/export, multi-seed experiment runs, CSV/JSON/SVG output
//! and agent checkpoints.

pub mod checkpoint;
pub mod config;
pub mod data_io;
pub mod experiment;
pub mod output;
pub mod plot;

pub use config::{load_config, ConfigLoadError};
pub use experiment::{run_experiment, ExperimentReport, ExperimentSpec, RunSummary, SweepValue};
pub use fedshield_core as core;
