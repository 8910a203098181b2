//! Weighted graphs over samples and the constrained discrete p-Dirichlet energy.

mod build;
mod solve;

pub use build::{build_epsilon_graph, build_knn_graph, epsilon_midpoint, WeightedGraph};
pub use solve::{
    default_step, discrete_energy, discrete_gradient, minimize_discrete, solve_p2_direct,
    Acceleration, DescentOptions, NodeLabels,
};
