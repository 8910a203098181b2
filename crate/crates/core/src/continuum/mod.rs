//! Local continuum energy on patched Chebyshev grids.

mod energy;
mod flow;
mod interp;
mod patches;
mod problem;
mod variational;

pub use energy::{local_energy, nonlocal_energy, NonlocalOptions};
pub use flow::{
    flow_residual, gradient_flow_rhs, interface_flux_mismatch, jacobian_inf_norm,
    minimize_continuum, semi_implicit_step, semi_implicit_step_with, thin_plate_initial,
    ContinuumOptions, FlowState, InitialGuess, Linearization, Scheme, ALGEBRAIC_TOL,
};
pub use interp::{evaluate_on_mesh, ContinuumField, PatchValues};
pub use patches::{
    build_patches, build_patches_with, GlobalNode, NodeRole, Patch, PatchedDomain, Placement,
};
pub use problem::{ContinuumProblem, OuterBoundary, GRADIENT_DELTA};
pub use variational::{
    energy_gradient_residual, energy_gradient_rhs, variational_inf_norm, variational_step,
};
