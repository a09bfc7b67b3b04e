//! Variance-reduced inverse projected gradient (VR-IPG) for stochastic
//! inverse variational inequalities: find `x` with `F(x) in X` and
//! `<y - F(x), x> >= 0` for all `y in X`, where `F(x) = E[G(x, xi)]` is only
//! available through samples.
//!
//! The crate is organised bottom-up:
//! - [`numkit`]: dense linear algebra aliases, seeded random streams, power iteration.
//! - [`feasible`]: boxes and box-plus-halfspace polyhedra with Euclidean projections.
//! - [`oracle`]: stochastic oracles, batch means and the batch-size schedule.
//! - [`solver`]: the gap function, the VR-IPG iteration and convergence diagnostics.
//! - [`problems`]: the affine box problem and the transportation-network problem.
//! - [`harness`]: replications, confidence intervals, CSV/metadata files and the CLI.
//! - [`verify`]: brute-force reference solvers and the `sivi verify` checks.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod feasible;
pub mod harness;
pub mod numkit;
pub mod oracle;
pub mod problems;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use feasible::{BoxSet, FeasibleSet, PolyhedronSet};
pub use numkit::{Matrix, RngStream, Vector};
pub use oracle::{AdditiveGaussianOracle, AffineMap, BatchSchedule, MeanMap, NoiseSampling, StochasticOracle};
pub use problems::SiviProblem;
pub use solver::{solve, GapEvalMode, Record, SolverConfig, Trace};
