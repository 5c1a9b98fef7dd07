//! Library surface of the experiment harness: configuration parsing and the
//! staged pipeline, reusable from tests and the binary.

pub mod config;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use pipeline::{emit_report, run_experiment, Report, RunOutput, Stage};
