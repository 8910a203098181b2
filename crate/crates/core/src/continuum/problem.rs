use std::fmt;
use std::sync::Arc;

use super::patches::{NodeRole, Patch, PatchedDomain};
use crate::constraints::ConstraintSet;
use crate::density::{sigma_eta, DensityField, WeightProfile};
use crate::error::{Error, Result};

/// Regularisation inside `(|∇u|² + δ²)^{(p−2)/2}`.
pub const GRADIENT_DELTA: f64 = 1e-8;

/// Outer-boundary treatment.
#[derive(Clone)]
pub enum OuterBoundary {
    /// Flux condition `−|∇u|^{p−2}∇u·n ρ² + β div(·)` evolved with the interior.
    Natural { beta: f64 },
    /// Values prescribed on all of `∂[0,1]²`.
    Dirichlet(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for OuterBoundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OuterBoundary::Natural { beta } => write!(f, "Natural {{ beta: {beta} }}"),
            OuterBoundary::Dirichlet(_) => f.write_str("Dirichlet(..)"),
        }
    }
}

/// How a global node enters the linear system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Unknown {
    Known(f64),
    /// Evolved by the flow; belongs to a single patch.
    Owned,
    /// Shared between patches; index into the interface system.
    Shared(usize),
}

/// The constrained local energy `σ_η ∫ |∇u|^p ρ²` on a patched domain.
#[derive(Debug, Clone)]
pub struct ContinuumProblem {
    domain: PatchedDomain,
    constraints: ConstraintSet,
    p: f64,
    sigma: f64,
    boundary: OuterBoundary,
    rho2: Vec<Vec<f64>>,
    unknowns: Vec<Unknown>,
    shared_count: usize,
}

impl ContinuumProblem {
    pub fn new(
        domain: PatchedDomain,
        constraints: ConstraintSet,
        density: &DensityField,
        p: f64,
        eta: WeightProfile,
        boundary: OuterBoundary,
    ) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::InvalidArgument(format!("p must exceed 1, got {p}")));
        }
        if p <= 2.0 {
            log::warn!(
                "p = {p} is at or below the dimension; point constraints are not well posed"
            );
        }
        if let OuterBoundary::Natural { beta } = boundary {
            if !(beta >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "beta must be non-negative, got {beta}"
                )));
            }
        }
        if domain.placements().len() != constraints.len() {
            return Err(Error::InvalidArgument(
                "domain was built for a different constraint set".into(),
            ));
        }
        let sigma = sigma_eta(eta, p, 2)?;
        let rho2: Vec<Vec<f64>> = domain
            .patches()
            .iter()
            .map(|patch| {
                let t = density.on_tensor_grid(patch.grid_x.nodes(), patch.grid_y.nodes());
                t.values.iter().map(|v| v * v).collect()
            })
            .collect();
        if rho2.iter().flatten().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument(
                "density is not strictly positive on the grid".into(),
            ));
        }
        let labels = constraints.labels();
        let mut shared_count = 0;
        let unknowns = domain
            .nodes()
            .iter()
            .enumerate()
            .map(|(g, node)| {
                if let Some(c) = domain.constraint_at(g) {
                    return Unknown::Known(labels[c]);
                }
                if let OuterBoundary::Dirichlet(f) = &boundary {
                    if node.on_outer_boundary {
                        return Unknown::Known(f(node.point[0], node.point[1]));
                    }
                }
                match node.role {
                    NodeRole::Interface => {
                        shared_count += 1;
                        Unknown::Shared(shared_count - 1)
                    }
                    _ => Unknown::Owned,
                }
            })
            .collect();
        Ok(Self {
            domain,
            constraints,
            p,
            sigma,
            boundary,
            rho2,
            unknowns,
            shared_count,
        })
    }

    pub fn domain(&self) -> &PatchedDomain {
        &self.domain
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn boundary(&self) -> &OuterBoundary {
        &self.boundary
    }

    pub fn beta(&self) -> f64 {
        match self.boundary {
            OuterBoundary::Natural { beta } => beta,
            OuterBoundary::Dirichlet(_) => 0.0,
        }
    }

    /// `ρ²` at the local nodes of `patch`.
    pub fn rho_squared(&self, patch: usize) -> &[f64] {
        &self.rho2[patch]
    }

    pub(crate) fn unknown(&self, node: usize) -> Unknown {
        self.unknowns[node]
    }

    pub(crate) fn shared_count(&self) -> usize {
        self.shared_count
    }

    /// Whether node `g` has a prescribed value (constraint or Dirichlet data).
    pub fn is_fixed(&self, g: usize) -> bool {
        matches!(self.unknowns[g], Unknown::Known(_))
    }

    /// Normals of the patch faces at local node `l` that lie on an interface.
    pub(crate) fn interface_faces(&self, patch: &Patch, l: usize) -> Vec<[f64; 2]> {
        let k = self.domain.per_side();
        let [px, py] = patch.index;
        patch
            .faces_at(l)
            .filter(|nrm| match (nrm[0] as i32, nrm[1] as i32) {
                (1, 0) => px + 1 < k,
                (-1, 0) => px > 0,
                (0, 1) => py + 1 < k,
                (0, -1) => py > 0,
                _ => false,
            })
            .collect()
    }
}
