//! Experiment configs, the experiment runner and the acceptance suite.

pub mod acceptance;
pub mod config;
pub mod run;
pub mod tolerances;

pub use acceptance::{selftest, Criterion, SelftestOptions};
pub use config::{EpsRule, ExperimentConfig, KRule, Kind};
pub use run::{compute, run, RunReport, Table};
