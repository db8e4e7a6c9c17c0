//! Benchmark harness around the `fastmu` solvers.
//!
//! A run executes every (algorithm, seed) cell of an [`ExperimentConfig`],
//! collects the traces into a [`TraceTable`] and writes CSV files, median
//! traces on the iteration and time axes, and SVG plots of both. Solver types
//! are re-exported from `fastmu`.

pub mod aggregate;
pub mod config;
pub mod error;
pub mod experiment;
pub mod plot;
pub mod table;

pub use aggregate::{aggregate_median, median, Axis};
pub use config::{ExperimentConfig, ProblemSource, SolverOverrides, SweepConfig};
pub use error::{BenchError, Result};
pub use experiment::{
    run_experiment, run_nls, sweep_delta, ExperimentReport, InnerCountRow, Mode, Schedule,
};
pub use plot::{emit_plot, render_svg};
pub use table::{Columns, TraceRow, TraceTable};

pub use fastmu::{Algorithm, Loss, SolverConfig, SparsitySetup, SyntheticSpec};
