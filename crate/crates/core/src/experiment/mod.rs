//! Experiment orchestration: configs, multi-trial runners, result files,
//! validation suites and the command-line front end.

pub mod cli;
pub mod config;
pub mod run;
pub mod stats;
pub mod validate;

pub use config::{DatasetSpec, ExperimentConfig, TestSelection, TrainSelection};
pub use run::{Command, Manifest, PointSummary, RunOutput, Summary, TrialOutcome, TrialPlan, TrialSummary};
