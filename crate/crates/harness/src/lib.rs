//! Experiment runner for learned parameter sharing: seeded parallel runs,
//! summaries with confidence intervals, CSV and SVG output, and numerical
//! checks of the analytical results.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod verify;

pub use config::{Experiment, ExperimentConfig, Method, Overrides};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, run_sweep, summarize, RunRecord, Stat, Summary};
