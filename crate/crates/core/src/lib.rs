//! Dense nonnegative matrix factorization `V ≈ WᵀH` with diagonal
//! majorize-minimize updates.
//!
//! The centerpiece is fastMU: a variable-metric projected gradient method
//! whose diagonal metric `(B u) ⊘ u` is built from the block Hessian `B` and a
//! closed-form choice of `u` that is tighter than the classical
//! multiplicative-updates choice `u = x`. Frobenius and KL losses are
//! supported, together with MU, HALS, NeNMF and projected gradient baselines
//! and a seeded synthetic problem generator.
//!
//! ```
//! use fastmu::{solve, Algorithm, SolverConfig, SyntheticSpec, generate};
//!
//! let problem = generate(&SyntheticSpec::new(30, 20, 3).with_seed(7)).unwrap();
//! let config = SolverConfig::new(Algorithm::FASTMU_FRO).with_max_outer(50);
//! let (factors, trace) = solve(&problem.v, 3, &config, None).unwrap();
//! assert_eq!(factors.w.shape(), (3, 30));
//! assert!(trace.final_loss() < trace.records[0].loss_normalized);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod losses;
pub mod majorants;
pub mod matrix;
pub mod solvers;
pub mod synthetic;

pub use error::{NmfError, Result};
pub use losses::{grad_h, grad_w, lipschitz_constant, loss, loss_normalized, Loss};
pub use majorants::{
    check_majorant_psd, metric, solve_u, MajorantKind, MetricMatrix, MetricOptions, PsdReport,
};
pub use matrix::{load_csv, save_csv, uniform_matrix, DenseMatrix, Rng};
pub use solvers::{
    solve, solve_nls, Algorithm, AlgorithmKind, Block, BlockOrder, ConvergenceTrace, FactorPair,
    HessianMode, SolverConfig, TraceRecord,
};
pub use synthetic::{generate, sparsify, SparsitySetup, SyntheticProblem, SyntheticSpec};
