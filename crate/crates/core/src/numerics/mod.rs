//! Spectral grids, differentiation and quadrature shared by the solvers.

pub mod banded;
pub mod cheb;
pub mod dense;
pub mod quadrature;

pub use cheb::{
    chebyshev_diff_matrix, chebyshev_nodes, tensor_diff_ops, Axis, ChebGrid1D, DiffOperator,
    TensorDiff,
};
pub use quadrature::{clenshaw_curtis_weights, gauss_legendre, quadrature_2d, QuadratureRule};
