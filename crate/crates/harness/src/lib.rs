//! Experiment driver for the `irsfd` beamforming library: sweep
//! specifications, scenario-parallel Monte-Carlo runs, deterministic result
//! files and charts, and the oracle self-check suite.

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod plot;
pub mod validation;

pub use config::{ExperimentSpec, Preset, SweepKind, SweepPoint, SweepSpec};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, RunOutput, SweepResult};
pub use validation::{run_validation_suite, ValidationReport};
