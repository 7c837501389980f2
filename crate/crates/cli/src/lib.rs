//! Experiment harness for the `kpp_core` front-asymptotics toolkit.

pub mod config;
pub mod experiment;
pub mod io;
pub mod manifest;
pub mod plot;
pub mod run;

pub use config::{ConfigError, ExperimentConfig, ExperimentKind, KvConfig};
pub use manifest::RunManifest;
pub use run::{run_experiment, RunError};
