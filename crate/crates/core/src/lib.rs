//! Variance-reduced stochastic gradient methods driven by increasing batch
//! sizes, and the statistics their central limit theorems make available.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense matrices, Cholesky and symmetric eigensolvers,
//!   seeded random streams and the F distribution.
//! - [`problems`]: stochastic first-order oracles with known optimum.
//! - [`schedules`]: geometric and polynomial batch-size rules.
//! - [`solvers`]: plain, Nesterov-accelerated and heavy-ball variance-reduced
//!   SGD plus a decreasing-step SGD baseline.
//! - [`theory`]: rate constants, mean-squared-error bounds, companion
//!   matrices and limiting covariances.
//! - [`inference`]: replication ensembles, Hotelling-type confidence regions,
//!   coverage experiments and normality diagnostics.

pub mod error;
pub mod inference;
pub mod numerics;
pub mod problems;
pub mod schedules;
pub mod solvers;
pub mod theory;

pub use error::{Error, Result};
pub use numerics::{Matrix, RngStream, SpdFactor};
pub use problems::{AnyProblem, LinearRegressionProblem, QuadraticGaussianProblem, StochasticProblem};
pub use schedules::{BatchSchedule, ScheduleKind};
pub use solvers::{AlgorithmKind, BaselineStep, SolverConfig, Storage, Trajectory};
pub use inference::{ConfidenceRegion, CoverageResult, CoverageSettings, ReplicationEnsemble, Scaling, Termination};
pub use theory::{CompanionLabel, CompanionMatrix, LimitCovariance, RateConstants};
