//! Experiment orchestration for root particle flows and the truncated
//! primitive equation: configs, reproducible runs and result files.

pub mod error;
pub mod experiments;
pub mod output;
pub mod sampling;
pub mod spec;

pub use error::{LabError, Result};
pub use experiments::{run_compare, run_suite, CompareReport};
pub use spec::{ExperimentSpec, InitialData, Kind, Thresholds};
