//! Experiment configuration, drivers and reporting.

pub mod config;
pub mod experiments;
pub mod manifest;
pub mod report;

pub use config::{Experiment, ExperimentConfig, Format};
pub use experiments::{
    execute, run, run_calibrate, run_concentration, run_coverage, run_lowerbound, run_rates, RunOutput,
};
pub use manifest::{manifest_path, CalibratedConstants, RunManifest};
pub use report::{Cell, Table};
