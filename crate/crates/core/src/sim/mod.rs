//! Closed-loop simulation, metrics, sweeps and the file formats around them.

pub mod config;
pub mod csv;
pub mod metrics;
pub mod rk4;
pub mod runner;
pub mod sweep;

pub use metrics::{overshoot_report, DeltaEstimate, DeltaSource, OvershootReport};
pub use runner::{run_scenario, ControllerKind, ControllerSetup, RunOutput, Termination, Trajectory};
