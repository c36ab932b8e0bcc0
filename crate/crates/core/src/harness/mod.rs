//! Experiment harness: configuration, orchestration, reproduction bundles,
//! and the built-in property suite.

pub mod config;
pub mod reproduce;
pub mod run;
pub mod selftest;

pub use config::{RunConfig, OUTPUT_ENV};
pub use reproduce::{reproduce, Figure, Scale};
pub use run::{run_experiment, RunArtifacts};
pub use selftest::selftest;
