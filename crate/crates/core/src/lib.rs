//! Semi-supervised label extension on planar point clouds by minimising
//! constrained p-Dirichlet energies.
//!
//! Three formulations are provided:
//!
//! * [`graph`]: the discrete energy on an ε-ball or kNN graph, minimised by
//!   (optionally accelerated) gradient descent, with a direct linear solve at `p = 2`;
//! * [`continuum`]: the density-weighted local energy `σ_η ∫ |∇u|^p ρ²`, minimised by a
//!   semi-implicit gradient flow on Chebyshev patches coupled through value and flux
//!   matching, plus evaluation of the nonlocal energy;
//! * [`density`]: kernel and spline-smoothed kernel density estimates that feed the
//!   continuum model with `ρ`.
//!
//! [`experiments`] reproduces the density-error, minimiser-convergence and timing studies,
//! and [`io`] holds configuration parsing and CSV persistence used by the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod constraints;
pub mod continuum;
pub mod density;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod io;
pub mod numerics;

pub use constraints::{Constraint, ConstraintSet};
pub use error::{Error, Result};

/// Relative slack used when deciding whether an energy went up.
///
/// Energies are sums of many positive terms; differences below this fraction of
/// the value are summation noise.
pub const ENERGY_ROUNDOFF: f64 = 1e-12;

/// A minimiser together with its convergence record.
#[derive(Debug, Clone)]
pub struct MinimizerResult<F> {
    pub field: F,
    pub energy: f64,
    pub iterations: usize,
    pub residual: f64,
    pub wall_time: std::time::Duration,
    pub converged: bool,
    /// Energy after every accepted step, starting with the initial state.
    pub energy_history: Vec<f64>,
}

impl<F> MinimizerResult<F> {
    /// Number of accepted steps that raised the energy beyond round-off.
    pub fn monotonicity_violations(&self) -> usize {
        count_increases(&self.energy_history)
    }
}

pub fn count_increases(history: &[f64]) -> usize {
    history
        .windows(2)
        .filter(|w| w[1] > w[0] + ENERGY_ROUNDOFF * w[0].abs().max(f64::MIN_POSITIVE))
        .count()
}
