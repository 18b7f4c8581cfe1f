//! Low-rank matrix completion with designed observation sampling.
//!
//! The toolkit completes a partially observed matrix by nuclear-norm
//! minimization and lets the observation set be *designed* when a block of
//! columns is known to be low rank: either recover that block exactly from
//! the fewest possible observations (`optimal`), or recover individual
//! column relations from small probes (`selective`), and compare both against
//! the plain `uniform` baseline.
//!
//! Module map:
//! - [`matrix`], [`observe`], [`structure`]: shared domain types.
//! - [`linalg`]: SVD, soft-thresholding, norms, small solves.
//! - [`synth`]: reproducible synthetic instances.
//! - [`sampling`]: the three observation strategies behind a query oracle.
//! - [`solver`]: constrained nuclear-norm minimization by operator splitting.
//! - [`harness`]: seeded multi-trial experiments with CSV output.

pub mod error;
pub mod harness;
pub mod linalg;
pub mod matrix;
pub mod observe;
pub mod rng;
pub mod sampling;
pub mod solver;
pub mod structure;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use observe::{budget_for_rate, project_observed, BudgetLedger, ObservationSet};
pub use sampling::{
    default_relation_count, optimal_sample, selective_sample, uniform_sample, MatrixOracle,
    SamplingPlan, Strategy,
};
pub use solver::{relative_error, solve, solve_decoupled, CompletionProblem, SolveReport, SolverOptions};
pub use structure::{min_optimal_observations, BlockConstraint, ColumnRelation, ColumnSet};
pub use synth::{generate, EntryDistribution, InstanceSpec};
