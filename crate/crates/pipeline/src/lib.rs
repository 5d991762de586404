//! Experiment pipeline for spiking-network compression.
//!
//! A TOML [`config::ExperimentConfig`] drives a fixed sequence of stages
//! (see [`stages::Stage`]). Each stage reads the artifacts of its
//! prerequisites from the output directory, writes its own artifacts
//! atomically and records a JSON [`manifest::RunManifest`] holding the
//! config hash, seeds, parent artifact hashes and metrics. A stage whose
//! manifest matches the current config and parents is skipped.

pub mod config;
pub mod dataset;
mod error;
pub mod manifest;
pub mod model;
pub mod stages;

pub use config::ExperimentConfig;
pub use error::{PipelineError, Result};
pub use model::ModelArtifact;
pub use stages::{Pipeline, Stage, StageOutcome};
