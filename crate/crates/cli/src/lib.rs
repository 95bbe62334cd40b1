//! Experiment runner behind the `latent-cascade` binary.
//!
//! Every command is a plain function so it can be driven from tests.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use commands::{cmd_eval, cmd_sample, cmd_sphere, cmd_train, EvalArgs, SampleArgs};
pub use config::{ExperimentKind, RunConfig};
pub use error::CliError;
pub use manifest::RunManifest;
