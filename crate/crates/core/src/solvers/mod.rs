//! Alternating solvers: fastMU and its extrapolated variant, plus the MU,
//! HALS, NeNMF and projected-gradient baselines.

mod config;
mod inner;
mod outer;

pub use config::{Algorithm, AlgorithmKind, BlockOrder, HessianMode, SolverConfig};
pub use inner::{
    gd_inner, hals_inner, inner_step_fastmu, mu_inner, nenmf_inner, run_inner_loop,
    run_inner_loop_extrapolated, update_block, Block, BlockProblem, InnerOutcome,
};
pub use outer::{solve, solve_nls, ConvergenceTrace, FactorPair, TraceRecord};
