//! Experiment harness around `vrgd-core`: JSON-configured runs, one-axis
//! sweeps, and optimizer comparisons, each leaving reproducible artifacts
//! (resolved config copy, per-step JSONL records, plot-ready CSVs, final
//! metrics) in its output directory.

pub mod compare;
pub mod config;
pub mod runner;
pub mod sweep;

pub use compare::{compare, CompareOutcome, Crossing};
pub use config::{ExperimentConfig, ModelConfig, OptimizerSection, ScheduleSection, Seeds};
pub use runner::{run, FinalSummary, RunOutcome};
pub use sweep::{sweep, SweepAxis, SweepOutcome, SweepRow};
