//! Confidence intervals for a regression coefficient that use uncertain prior
//! information about a second coefficient.
//!
//! The interval `J(b, s)` is centred at `theta_hat - sqrt(v11) sigma_hat b(x)`
//! with half-width `sqrt(v11) sigma_hat s(|x|)`, where `x` is the scaled
//! estimate of the second coefficient's deviation from its prior guess. The
//! functions `b` and `s` are cubic splines fixed by their values at knots
//! on `[0, d]`; past `d` the interval coincides with the standard one.
//!
//! * [`regress`] fits the linear model and reduces it to `(v11, v12, v22, rho, m)`.
//! * [`bsfun`] builds `b` and `s`, plus the post-model-selection ("naive")
//!   interval and the known-variance transition family.
//! * [`perfeval`] computes coverage and scaled expected length by quadrature.
//! * [`optimize`] chooses the knot values to minimise a weighted expected
//!   length subject to the coverage constraint.
//! * [`mcheck`] estimates the same quantities by simulation.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bsfun;
pub mod cli;
pub mod dist;
pub mod error;
pub mod mcheck;
pub mod optimize;
pub mod perfeval;
pub mod quadrature;
pub mod regress;
pub mod spline;

pub use bsfun::{BSFunctions, IntervalShape, NaiveBs, SEndCondition, TransitionBs};
pub use dist::DegreesOfFreedom;
pub use error::{Error, Result};
pub use optimize::{solve, SolveConfig, SolveReport};
pub use perfeval::{EvalSettings, PerformanceCurve};
pub use regress::{ConfidenceInterval, Geometry, RegressionProblem};
