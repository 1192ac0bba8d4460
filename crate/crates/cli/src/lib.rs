//! Experiment runner: configuration, batch sweeps, timing and the
//! per-iteration complexity estimates.

pub mod complexity;
pub mod config;
pub mod runner;
pub mod solution;

pub use complexity::complexity_estimate;
pub use config::{Axis, ExperimentConfig, Figure, Point};
pub use runner::{read_rows, read_timing, run, timing, write_rows, write_timing, Row, TimingRow, RUN_COLUMNS};
