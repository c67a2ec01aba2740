//! Runs, sweeps, calibration and reports.

pub mod analytic;
pub mod calibrate;
pub mod config;
pub mod simulate;
pub mod sweep;

pub use analytic::{analytic_expectations, expectations, Expectation};
pub use calibrate::{calibrate, Calibration, CalibrationProblem, Param, Target};
pub use config::{ExperimentConfig, PhasematchFile};
pub use simulate::{run, run_paired, run_with_clicks};
pub use sweep::{emit_report, sweep, RunRecord};
