//! Simulation core for trust-aware defenses in federated learning.
//!
//! The crate is `no_std` (with `alloc`) and contains everything that is pure
//! computation: seeded random streams, the synthetic dataset and Dirichlet
//! partitioner, the client MLP, attack behaviors, anomaly signals, Bayesian
//! belief and trust tracking, the defense controllers, metrics and the
//! round-level orchestration. File formats, the CLI and the experiment
//! worker pool live in the `fedshield` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod agents;
pub mod attacks;
pub mod config;
pub mod dataset;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod signals;
pub mod sim;
pub mod trust;

pub use config::SimConfig;
pub use nn::ParamVector;
pub use rng::{derive_stream, RngStream};
pub use sim::{RunOutput, Simulation};
