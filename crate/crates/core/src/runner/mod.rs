//! Experiment harness: configuration, seeding, episode orchestration and
//! CSV/JSON persistence.

pub mod config;
pub mod csvio;
pub mod curves;
pub mod seeds;
pub mod suite;

pub use config::{EvaluationMode, ExperimentConfig, Overrides};
pub use suite::{run_suite, SuiteResult};
