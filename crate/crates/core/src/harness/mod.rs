//! Configuration, Monte Carlo experiment drivers and result emission.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{ConstraintMode, ExperimentConfig, ExperimentKind, OneOrMany};
pub use experiments::{run, run_mse_vs_sensors, run_outage_vs_power, run_tracking_trace, GainPolicy};
pub use output::{emit_results, to_csv, ResultRow, CSV_HEADER};
