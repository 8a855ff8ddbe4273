//! Agent-based epidemic testbed.
//!
//! Synthetic households and small-world occupation networks, SEIR dynamics
//! with the alert/precaution/inform behaviour model, and the experiments
//! that measure adoption thresholds, distance distortion, intervention
//! impact and co-presence inference. Runs drive the real signal server
//! in-process.

pub mod config;
pub mod contacts;
pub mod epidemic;
pub mod experiments;
pub mod rng;
pub mod runner;
pub mod world;

pub use config::{ScenarioConfig, SimConfigError};
pub use epidemic::{transmission_step, Health, RunResult, Simulation};
pub use world::{generate_world, SimWorld};
pub use runner::{run_experiments, RunOutputs};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] SimConfigError),
    #[error("signal server: {0}")]
    Server(#[from] netdist_server::ServerError),
    #[error("writing {0:?}: {1}")]
    Output(PathBuf, String),
}
