use std::time::Instant;

use rayon::prelude::*;

use super::energy::local_energy;
use super::interp::ContinuumField;
use super::patches::{NodeRole, Patch};
use super::problem::{ContinuumProblem, OuterBoundary, Unknown, GRADIENT_DELTA};
use super::variational::{energy_gradient_residual, variational_inf_norm, variational_step};
use crate::error::{Error, Result};
use crate::numerics::dense::{LuFactor, Matrix};
use crate::{MinimizerResult, ENERGY_ROUNDOFF};

/// Relative residual allowed in the interface system.
pub const ALGEBRAIC_TOL: f64 = 1e-8;

const TAU_GROWTH: f64 = 10.0;
const TAU_MAX: f64 = 1e12;
const MAX_HALVINGS: usize = 60;

/// Nodal state of the gradient flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    /// One value per global node.
    pub u: Vec<f64>,
    pub time: f64,
    /// Relative residual of the last interface solve.
    pub algebraic_residual: f64,
}

impl FlowState {
    /// Takes `u` and overwrites prescribed nodes with their values.
    pub fn new(problem: &ContinuumProblem, mut u: Vec<f64>) -> Result<Self> {
        if u.len() != problem.domain().node_count() {
            return Err(Error::Shape(format!(
                "{} values for {} nodes",
                u.len(),
                problem.domain().node_count()
            )));
        }
        for (g, v) in u.iter_mut().enumerate() {
            if let Unknown::Known(k) = problem.unknown(g) {
                *v = k;
            }
        }
        Ok(Self {
            u,
            time: 0.0,
            algebraic_residual: 0.0,
        })
    }
}

/// Starting field for [`minimize_continuum`].
#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    /// Thin-plate interpolation of the prescribed values, clamped to their range.
    ThinPlate,
    Constant(f64),
    /// One value per global node.
    Field(Vec<f64>),
}

/// How the nonlinear operator is linearised about the current state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Linearization {
    /// Full Jacobian of `div(ρ²|∇u|^{p−2}∇u)`; Newton's method as `τ → ∞`.
    #[default]
    Newton,
    /// Coefficient `ρ²|∇u|^{p−2}` frozen at the current state.
    Picard,
}

/// Discretisation of the flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Gradient flow of the quadrature energy; interface and natural boundary conditions hold weakly.
    #[default]
    Variational,
    /// Pointwise collocation of the strong form with algebraic interface flux balance.
    Collocation,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variational" => Ok(Scheme::Variational),
            "collocation" => Ok(Scheme::Collocation),
            other => Err(Error::InvalidArgument(format!("unknown scheme `{other}`"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Variational => "variational",
            Scheme::Collocation => "collocation",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumOptions {
    /// Initial pseudo-time step; `None` uses `0.5 / ‖J‖∞`.
    pub tau: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub init: InitialGuess,
    /// Used by [`Scheme::Collocation`] only.
    pub linearization: Linearization,
    pub scheme: Scheme,
}

impl Default for ContinuumOptions {
    fn default() -> Self {
        Self {
            tau: None,
            tol: 1e-5,
            max_iter: 500,
            init: InitialGuess::ThinPlate,
            linearization: Linearization::Newton,
            scheme: Scheme::Variational,
        }
    }
}

/// Gradient, coefficient `a = ρ²(|∇u|² + δ²)^{(p−2)/2}` and linearised flux tensor on one patch.
pub(super) struct PatchFlux {
    pub(super) ux: Vec<f64>,
    pub(super) uy: Vec<f64>,
    pub(super) a: Vec<f64>,
    /// `[Axx, Axy, Ayy]` with `A = a I + (p−2) ρ² (|∇u|² + δ²)^{(p−4)/2} ∇u ∇uᵀ` (Newton) or `a I`.
    pub(super) tensor: [Vec<f64>; 3],
}

pub(super) fn patch_flux(
    problem: &ContinuumProblem,
    pid: usize,
    u_local: &[f64],
    lin: Linearization,
) -> PatchFlux {
    let patch = &problem.domain().patches()[pid];
    let ux = patch.dx.apply(u_local);
    let uy = patch.dy.apply(u_local);
    let rho2 = problem.rho_squared(pid);
    let p = problem.p();
    let d2 = GRADIENT_DELTA * GRADIENT_DELTA;
    let m = ux.len();
    let mut a = vec![0.0; m];
    let mut tensor = [vec![0.0; m], vec![0.0; m], vec![0.0; m]];
    for l in 0..m {
        let s = ux[l] * ux[l] + uy[l] * uy[l] + d2;
        a[l] = rho2[l] * s.powf(0.5 * (p - 2.0));
        let c = match lin {
            Linearization::Newton => (p - 2.0) * a[l] / s,
            Linearization::Picard => 0.0,
        };
        tensor[0][l] = a[l] + c * ux[l] * ux[l];
        tensor[1][l] = c * ux[l] * uy[l];
        tensor[2][l] = a[l] + c * uy[l] * uy[l];
    }
    PatchFlux { ux, uy, a, tensor }
}

fn divergence(patch: &Patch, f: &PatchFlux) -> Vec<f64> {
    let qx: Vec<f64> = f.a.iter().zip(&f.ux).map(|(a, g)| a * g).collect();
    let qy: Vec<f64> = f.a.iter().zip(&f.uy).map(|(a, g)| a * g).collect();
    let mut div = patch.dx.apply(&qx);
    for (d, v) in div.iter_mut().zip(patch.dy.apply(&qy)) {
        *d += v;
    }
    div
}

/// Right-hand side of the gradient flow at every global node.
///
/// Interior nodes carry `div(ρ²|∇u|^{p−2}∇u)`; outer-boundary nodes carry
/// `−ρ²|∇u|^{p−2}∇u·n + β div(·)`; prescribed and shared nodes are zero.
pub fn gradient_flow_rhs(state: &FlowState, problem: &ContinuumProblem) -> Vec<f64> {
    let domain = problem.domain();
    let per_patch: Vec<Vec<(usize, f64)>> = domain
        .patches()
        .par_iter()
        .enumerate()
        .map(|(pid, patch)| {
            let ul = domain.gather(pid, &state.u);
            let flux = patch_flux(problem, pid, &ul, Linearization::Picard);
            let div = divergence(patch, &flux);
            patch
                .global
                .iter()
                .enumerate()
                .filter(|(_, &g)| problem.unknown(g) == Unknown::Owned)
                .map(|(l, &g)| (g, owned_rhs(problem, g, l, &flux, &div)))
                .collect()
        })
        .collect();
    let mut rhs = vec![0.0; domain.node_count()];
    for (g, v) in per_patch.into_iter().flatten() {
        rhs[g] = v;
    }
    rhs
}

fn owned_rhs(problem: &ContinuumProblem, g: usize, l: usize, flux: &PatchFlux, div: &[f64]) -> f64 {
    match problem.domain().nodes()[g].role {
        NodeRole::Boundary { normal } => {
            -flux.a[l] * (normal[0] * flux.ux[l] + normal[1] * flux.uy[l]) + problem.beta() * div[l]
        }
        _ => div[l],
    }
}

/// Max norm of the rhs over nodes the flow evolves directly.
pub fn flow_residual(state: &FlowState, problem: &ContinuumProblem) -> f64 {
    gradient_flow_rhs(state, problem)
        .iter()
        .fold(0.0, |m, v| m.max(v.abs()))
}

/// Net interface flux `Σ ρ²|∇u|^{p−2}∇u·n` over the copies of every free shared node.
pub fn interface_flux_mismatch(state: &FlowState, problem: &ContinuumProblem) -> Vec<f64> {
    let domain = problem.domain();
    let mut out = vec![0.0; problem.shared_count()];
    for (pid, patch) in domain.patches().iter().enumerate() {
        let ul = domain.gather(pid, &state.u);
        let flux = patch_flux(problem, pid, &ul, Linearization::Picard);
        for (l, &g) in patch.global.iter().enumerate() {
            if let Unknown::Shared(s) = problem.unknown(g) {
                for nrm in problem.interface_faces(patch, l) {
                    out[s] += flux.a[l] * (nrm[0] * flux.ux[l] + nrm[1] * flux.uy[l]);
                }
            }
        }
    }
    out
}

/// Linearised operator rows for the owned nodes of a patch.
///
/// Interior rows hold `L_A = ∇·(A ∇·)`; boundary rows hold `−n·A∇ + β L_A`.
/// Rows are dense over the local nodes.
fn owned_rows(problem: &ContinuumProblem, pid: usize, flux: &PatchFlux, owned: &[usize]) -> Matrix {
    let patch = &problem.domain().patches()[pid];
    let n = patch.side();
    let dx = patch.dx.factor();
    let dy = patch.dy.factor();
    let beta = problem.beta();
    let [axx, axy, ayy] = &flux.tensor;
    let cross = axy.iter().any(|&v| v != 0.0);
    let mut rows = Matrix::zeros(owned.len(), n * n);
    for (r, &l) in owned.iter().enumerate() {
        let (i, j) = (l % n, l / n);
        let (scale, normal) = match problem.domain().nodes()[patch.global[l]].role {
            NodeRole::Boundary { normal } => (beta, Some(normal)),
            _ => (1.0, None),
        };
        let row = rows.row_mut(r);
        if scale != 0.0 {
            for m in 0..n {
                // Dx diag(Axx) Dx and Dx diag(Axy) Dy through node (m, j)
                let dxm = scale * dx.get(i, m);
                if dxm != 0.0 {
                    let w = dxm * axx[j * n + m];
                    for (c, &d) in dx.row(m).iter().enumerate() {
                        row[j * n + c] += w * d;
                    }
                    if cross {
                        let w = dxm * axy[j * n + m];
                        for (c, &d) in dy.row(j).iter().enumerate() {
                            row[c * n + m] += w * d;
                        }
                    }
                }
                // Dy diag(Ayy) Dy and Dy diag(Axy) Dx through node (i, m)
                let dym = scale * dy.get(j, m);
                if dym != 0.0 {
                    let w = dym * ayy[m * n + i];
                    for (c, &d) in dy.row(m).iter().enumerate() {
                        row[c * n + i] += w * d;
                    }
                    if cross {
                        let w = dym * axy[m * n + i];
                        for (c, &d) in dx.row(i).iter().enumerate() {
                            row[m * n + c] += w * d;
                        }
                    }
                }
            }
        }
        if let Some(nrm) = normal {
            for (c, v) in normal_flux_row(patch, flux, l, nrm) {
                row[c] -= v;
            }
        }
    }
    rows
}

/// `n·A∇v` at local node `l` as a sparse row.
fn normal_flux_row(patch: &Patch, flux: &PatchFlux, l: usize, nrm: [f64; 2]) -> Vec<(usize, f64)> {
    let n = patch.side();
    let (i, j) = (l % n, l / n);
    let [axx, axy, ayy] = &flux.tensor;
    let cx = nrm[0] * axx[l] + nrm[1] * axy[l];
    let cy = nrm[0] * axy[l] + nrm[1] * ayy[l];
    let mut out = Vec::with_capacity(2 * n);
    if cx != 0.0 {
        out.extend(
            patch
                .dx
                .factor()
                .row(i)
                .iter()
                .enumerate()
                .map(|(c, &d)| (j * n + c, cx * d)),
        );
    }
    if cy != 0.0 {
        out.extend(
            patch
                .dy
                .factor()
                .row(j)
                .iter()
                .enumerate()
                .map(|(c, &d)| (c * n + i, cy * d)),
        );
    }
    out
}

#[derive(Clone, Copy)]
pub(super) enum Local {
    Owned(usize),
    Shared(usize),
    Known,
}

/// Eliminated patch system: `Δ_O = xb − xs · Δ_S`.
struct PatchSolve {
    kinds: Vec<Local>,
    /// Shared indices (global interface numbering) touched by this patch, in column order.
    shared: Vec<usize>,
    /// `|O| × (|S_P| + 1)`: columns `A_OO⁻¹ A_OS`, last column `A_OO⁻¹ F_O`.
    x: Matrix,
    flux: PatchFlux,
}

pub(super) fn local_kinds(
    problem: &ContinuumProblem,
    patch: &Patch,
) -> (Vec<Local>, Vec<usize>, Vec<usize>) {
    let mut owned = Vec::new();
    let mut shared = Vec::new();
    let kinds = patch
        .global
        .iter()
        .enumerate()
        .map(|(l, &g)| match problem.unknown(g) {
            Unknown::Known(_) => Local::Known,
            Unknown::Owned => {
                owned.push(l);
                Local::Owned(owned.len() - 1)
            }
            Unknown::Shared(s) => {
                shared.push(s);
                Local::Shared(shared.len() - 1)
            }
        })
        .collect();
    (kinds, owned, shared)
}

fn solve_patch(
    problem: &ContinuumProblem,
    pid: usize,
    u: &[f64],
    tau: f64,
    lin: Linearization,
) -> Result<PatchSolve> {
    let domain = problem.domain();
    let patch = &domain.patches()[pid];
    let ul = domain.gather(pid, u);
    let flux = patch_flux(problem, pid, &ul, lin);
    let div = divergence(patch, &flux);
    let (kinds, owned, shared) = local_kinds(problem, patch);
    let rows = owned_rows(problem, pid, &flux, &owned);
    let no = owned.len();
    let ns = shared.len();
    let mut a_oo = Matrix::zeros(no, no);
    let mut rhs = Matrix::zeros(no, ns + 1);
    for (r, &l) in owned.iter().enumerate() {
        for (c, &v) in rows.row(r).iter().enumerate() {
            match kinds[c] {
                Local::Owned(oc) => a_oo[(r, oc)] -= v,
                Local::Shared(sc) => rhs[(r, sc)] -= v,
                Local::Known => {}
            }
        }
        a_oo[(r, r)] += 1.0 / tau;
        rhs[(r, ns)] = owned_rhs(problem, patch.global[l], l, &flux, &div);
    }
    if no > 0 {
        let lu = LuFactor::new(a_oo).map_err(|e| match e {
            Error::Singular(msg) => {
                Error::StepFailure(format!("patch {pid} at tau={tau:.3e}: {msg}"))
            }
            other => other,
        })?;
        let ratio = lu.pivot_ratio();
        if !ratio.is_finite() || ratio > 1e15 {
            return Err(Error::StepFailure(format!(
                "patch {pid} at tau={tau:.3e}: pivot ratio {ratio:.3e}"
            )));
        }
        lu.solve_in_place(&mut rhs);
    }
    Ok(PatchSolve {
        kinds,
        shared,
        x: rhs,
        flux,
    })
}

/// One semi-implicit Euler step with the default [`Linearization::Newton`].
pub fn semi_implicit_step(
    state: &FlowState,
    problem: &ContinuumProblem,
    tau: f64,
) -> Result<FlowState> {
    semi_implicit_step_with(state, problem, tau, Linearization::Newton)
}

/// One linearly implicit Euler step `(I/τ − J) Δ = F(u)` of the flow.
///
/// Owned nodes are eliminated patch by patch; the shared nodes then satisfy the
/// linearised interface flux balance through a dense Schur complement.
pub fn semi_implicit_step_with(
    state: &FlowState,
    problem: &ContinuumProblem,
    tau: f64,
    lin: Linearization,
) -> Result<FlowState> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "tau must be positive, got {tau}"
        )));
    }
    let domain = problem.domain();
    let solves: Vec<PatchSolve> = (0..domain.patches().len())
        .into_par_iter()
        .map(|pid| solve_patch(problem, pid, &state.u, tau, lin))
        .collect::<Result<_>>()?;

    let ns = problem.shared_count();
    let mut schur = Matrix::zeros(ns, ns);
    let mut r = vec![0.0; ns];
    for (pid, ps) in solves.iter().enumerate() {
        let patch = &domain.patches()[pid];
        let last = ps.shared.len();
        for (l, kind) in ps.kinds.iter().enumerate() {
            let Local::Shared(sl) = *kind else { continue };
            let s = ps.shared[sl];
            for nrm in problem.interface_faces(patch, l) {
                r[s] -= ps.flux.a[l] * (nrm[0] * ps.flux.ux[l] + nrm[1] * ps.flux.uy[l]);
                for (c, f) in normal_flux_row(patch, &ps.flux, l, nrm) {
                    match ps.kinds[c] {
                        Local::Owned(o) => {
                            let xrow = ps.x.row(o);
                            for (k, &sg) in ps.shared.iter().enumerate() {
                                schur[(s, sg)] -= f * xrow[k];
                            }
                            r[s] -= f * xrow[last];
                        }
                        Local::Shared(k) => schur[(s, ps.shared[k])] += f,
                        Local::Known => {}
                    }
                }
            }
        }
    }

    let mut ds = vec![0.0; ns];
    let mut algebraic_residual = 0.0;
    if ns > 0 {
        let keep = schur.clone();
        let lu = LuFactor::new(schur).map_err(|e| match e {
            Error::Singular(msg) => {
                Error::StepFailure(format!("interface system at tau={tau:.3e}: {msg}"))
            }
            other => other,
        })?;
        ds = lu.solve(&r);
        let res = keep.mul_vec(&ds);
        let scale = keep.inf_norm() * ds.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            + r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = res
            .iter()
            .zip(&r)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        algebraic_residual = if scale > 0.0 { err / scale } else { err };
        if !(algebraic_residual <= ALGEBRAIC_TOL) {
            return Err(Error::AlgebraicSolve {
                residual: algebraic_residual,
                limit: ALGEBRAIC_TOL,
            });
        }
    }

    let mut u = state.u.clone();
    for (g, v) in u.iter_mut().enumerate() {
        match problem.unknown(g) {
            Unknown::Known(k) => *v = k,
            Unknown::Shared(s) => *v += ds[s],
            Unknown::Owned => {}
        }
    }
    for (pid, ps) in solves.iter().enumerate() {
        let patch = &domain.patches()[pid];
        let last = ps.shared.len();
        for (l, kind) in ps.kinds.iter().enumerate() {
            if let Local::Owned(o) = *kind {
                let xrow = ps.x.row(o);
                let mut d = xrow[last];
                for (k, &sg) in ps.shared.iter().enumerate() {
                    d -= xrow[k] * ds[sg];
                }
                u[patch.global[l]] += d;
            }
        }
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::StepFailure(format!(
            "non-finite values at tau={tau:.3e}"
        )));
    }
    Ok(FlowState {
        u,
        time: state.time + tau,
        algebraic_residual,
    })
}

/// `‖J‖∞` of the linearised flow operator at `state`.
pub fn jacobian_inf_norm(state: &FlowState, problem: &ContinuumProblem) -> f64 {
    let domain = problem.domain();
    (0..domain.patches().len())
        .into_par_iter()
        .map(|pid| {
            let patch = &domain.patches()[pid];
            let ul = domain.gather(pid, &state.u);
            let flux = patch_flux(problem, pid, &ul, Linearization::Newton);
            let (_, owned, _) = local_kinds(problem, patch);
            let rows = owned_rows(problem, pid, &flux, &owned);
            (0..owned.len())
                .map(|r| rows.row(r).iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Thin-plate spline through `(points, values)` with an affine term.
fn thin_plate(points: &[[f64; 2]], values: &[f64]) -> Result<impl Fn(f64, f64) -> f64> {
    let m = points.len();
    let phi = |r2: f64| if r2 > 0.0 { 0.5 * r2 * r2.ln() } else { 0.0 };
    let mut a = Matrix::zeros(m + 3, m + 3);
    for i in 0..m {
        for j in 0..m {
            let r2 = (points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2);
            a[(i, j)] = phi(r2);
        }
        for (k, v) in [1.0, points[i][0], points[i][1]].into_iter().enumerate() {
            a[(i, m + k)] = v;
            a[(m + k, i)] = v;
        }
    }
    let mut b = values.to_vec();
    b.extend([0.0; 3]);
    let coef = a.lu()?.solve(&b);
    let pts = points.to_vec();
    Ok(move |x: f64, y: f64| {
        let mut s = coef[m] + coef[m + 1] * x + coef[m + 2] * y;
        for (c, p) in coef.iter().zip(&pts) {
            s += c * phi((x - p[0]).powi(2) + (y - p[1]).powi(2));
        }
        s
    })
}

/// Thin-plate interpolant of the constraints (and a sample of Dirichlet data), clamped to the data range.
pub fn thin_plate_initial(problem: &ContinuumProblem) -> Vec<f64> {
    let domain = problem.domain();
    let mut points = problem.constraints().points();
    let mut values = problem.constraints().labels();
    if let OuterBoundary::Dirichlet(g) = problem.boundary() {
        let boundary: Vec<[f64; 2]> = domain
            .nodes()
            .iter()
            .enumerate()
            .filter(|(i, n)| n.on_outer_boundary && domain.constraint_at(*i).is_none())
            .map(|(_, n)| n.point)
            .filter(|p| !points.contains(p))
            .collect();
        let stride = boundary.len().div_ceil(64).max(1);
        for p in boundary.into_iter().step_by(stride) {
            values.push(g(p[0], p[1]));
            points.push(p);
        }
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    match thin_plate(&points, &values) {
        Ok(s) => domain
            .nodes()
            .iter()
            .map(|n| s(n.point[0], n.point[1]).clamp(lo, hi))
            .collect(),
        Err(e) => {
            log::warn!("thin-plate start failed ({e}); using the mean label");
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            vec![mean; domain.node_count()]
        }
    }
}

/// Minimises the local energy by pseudo-transient semi-implicit steps.
///
/// The step grows tenfold after every accepted step and is halved whenever the
/// energy would rise. Stops when the max norm of the scheme's rhs ([`energy_gradient_rhs`]
/// or [`gradient_flow_rhs`]) is at most `tol`.
///
/// [`energy_gradient_rhs`]: super::energy_gradient_rhs
pub fn minimize_continuum(
    problem: &ContinuumProblem,
    opts: &ContinuumOptions,
) -> Result<MinimizerResult<ContinuumField>> {
    let start = Instant::now();
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol must be positive, got {}",
            opts.tol
        )));
    }
    let u0 = match &opts.init {
        InitialGuess::ThinPlate => thin_plate_initial(problem),
        InitialGuess::Constant(c) => vec![*c; problem.domain().node_count()],
        InitialGuess::Field(v) => v.clone(),
    };
    let mut state = FlowState::new(problem, u0)?;
    let mut energy = local_energy(&state.u, problem);
    let mut history = vec![energy];
    let step = |s: &FlowState, tau: f64| match opts.scheme {
        Scheme::Variational => variational_step(s, problem, tau),
        Scheme::Collocation => semi_implicit_step_with(s, problem, tau, opts.linearization),
    };
    let measure = |s: &FlowState| match opts.scheme {
        Scheme::Variational => energy_gradient_residual(s, problem),
        Scheme::Collocation => flow_residual(s, problem),
    };
    let mut residual = measure(&state);
    let mut tau = match opts.tau {
        Some(t) if t > 0.0 => t,
        Some(t) => {
            return Err(Error::InvalidArgument(format!(
                "tau must be positive, got {t}"
            )))
        }
        None => {
            let norm = match opts.scheme {
                Scheme::Variational => variational_inf_norm(&state, problem),
                Scheme::Collocation => jacobian_inf_norm(&state, problem),
            };
            0.5 / norm.max(f64::MIN_POSITIVE)
        }
    };
    let mut iterations = 0;
    let mut stalled = false;
    while residual > opts.tol && iterations < opts.max_iter {
        let mut halvings = 0;
        let next = loop {
            let trial = step(&state, tau).map(|s| {
                let e = local_energy(&s.u, problem);
                (s, e)
            });
            match trial {
                Ok((s, e)) if e <= energy + ENERGY_ROUNDOFF * energy.abs() => break Some((s, e)),
                Ok(_) | Err(Error::StepFailure(_)) | Err(Error::AlgebraicSolve { .. }) => {
                    tau *= 0.5;
                    halvings += 1;
                    if halvings > MAX_HALVINGS {
                        break None;
                    }
                }
                Err(e) => return Err(e),
            }
        };
        let Some((s, e)) = next else {
            log::warn!("step size collapsed to {tau:.3e} with residual {residual:.3e}; stopping");
            stalled = true;
            break;
        };
        state = s;
        energy = e;
        history.push(e);
        residual = measure(&state);
        iterations += 1;
        log::debug!(
            "step {iterations}: tau={tau:.3e} energy={energy:.10e} residual={residual:.3e}"
        );
        tau = (tau * TAU_GROWTH).min(TAU_MAX);
    }
    let converged = residual <= opts.tol && !stalled;
    if !converged {
        log::warn!("continuum flow stopped after {iterations} steps with residual {residual:.3e}");
    }
    Ok(MinimizerResult {
        field: ContinuumField::from_nodes(problem.domain(), &state.u)?,
        energy,
        iterations,
        residual,
        wall_time: start.elapsed(),
        converged,
        energy_history: history,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::constraints::ConstraintSet;
    use crate::continuum::{build_patches, build_patches_with};
    use crate::density::{reference_density, DensityField, DensityId, WeightProfile};

    fn uniform() -> DensityField {
        DensityField::exact(reference_density(DensityId::Rho1))
    }

    fn lattice(k: usize) -> Vec<[f64; 2]> {
        let m = k + 1;
        (0..m * m)
            .map(|i| [(i % m) as f64 / k as f64, (i / m) as f64 / k as f64])
            .collect()
    }

    fn boundary_lattice(k: usize) -> Vec<[f64; 2]> {
        lattice(k)
            .into_iter()
            .filter(|p| p.iter().any(|&t| t == 0.0 || t == 1.0))
            .collect()
    }

    fn problem(
        points: &[[f64; 2]],
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        n: usize,
        k: usize,
        p: f64,
        boundary: Option<f64>,
    ) -> ContinuumProblem {
        let c = ConstraintSet::from_fn(points, &f).unwrap();
        let d = build_patches_with(&c, n, k).unwrap();
        let b = match boundary {
            Some(beta) => OuterBoundary::Natural { beta },
            None => OuterBoundary::Dirichlet(Arc::new(f)),
        };
        ContinuumProblem::new(d, c, &uniform(), p, WeightProfile::Indicator, b).unwrap()
    }

    #[test]
    fn rhs_of_half_square_is_one() {
        let pr = problem(&lattice(1), |x, _| 0.5 * x * x, 12, 1, 2.0, Some(0.0));
        let u: Vec<f64> = pr
            .domain()
            .points()
            .iter()
            .map(|p| 0.5 * p[0] * p[0])
            .collect();
        let s = FlowState::new(&pr, u).unwrap();
        let rhs = gradient_flow_rhs(&s, &pr);
        for (g, node) in pr.domain().nodes().iter().enumerate() {
            match node.role {
                NodeRole::Interior => assert!((rhs[g] - 1.0).abs() < 1e-6),
                NodeRole::Boundary { normal } if !pr.is_fixed(g) => {
                    // β = 0: pure flux −x n_x
                    assert!((rhs[g] + node.point[0] * normal[0]).abs() < 1e-9);
                }
                _ => assert_eq!(rhs[g], 0.0),
            }
        }
    }

    #[test]
    fn affine_is_a_fixed_point() {
        let f = |x: f64, y: f64| 0.2 + 0.7 * x - 0.4 * y;
        for p in [2.0, 3.0, 4.0] {
            let pr = problem(&boundary_lattice(2), f, 9, 2, p, None);
            let u: Vec<f64> = pr.domain().points().iter().map(|q| f(q[0], q[1])).collect();
            let s = FlowState::new(&pr, u.clone()).unwrap();
            assert!(flow_residual(&s, &pr) < 1e-9);
            let next = semi_implicit_step(&s, &pr, 1e3).unwrap();
            let diff = next
                .u
                .iter()
                .zip(&u)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(diff < 1e-10, "p={p}: {diff}");
        }
    }

    #[test]
    fn converges_to_affine_from_constant() {
        let f = |x: f64, y: f64| 1.0 + x - 0.5 * y;
        for p in [2.0, 3.0] {
            let pr = problem(&boundary_lattice(2), f, 10, 2, p, None);
            let opts = ContinuumOptions {
                init: InitialGuess::Constant(0.5),
                tol: 1e-9,
                ..Default::default()
            };
            let res = minimize_continuum(&pr, &opts).unwrap();
            assert!(res.converged, "p={p}: residual {}", res.residual);
            assert_eq!(res.monotonicity_violations(), 0);
            for k in 0..30 {
                let (x, y) = ((k as f64 * 0.31).fract(), (k as f64 * 0.53).fract());
                assert!((res.field.value(x, y).unwrap() - f(x, y)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn interface_conditions_hold_after_step() {
        let pts = lattice(3);
        let pr = problem(&pts, |x, y| (x - 0.5).powi(2) + y, 8, 3, 3.0, Some(0.01));
        let s = FlowState::new(&pr, thin_plate_initial(&pr)).unwrap();
        let next = semi_implicit_step(&s, &pr, 1e-3).unwrap();
        assert!(next.algebraic_residual <= ALGEBRAIC_TOL);
        for (g, c) in pr.constraints().iter().enumerate() {
            for &node in &pr.domain().placements()[g].nodes {
                assert_eq!(next.u[node], c.label);
            }
        }
    }

    #[test]
    fn energy_decreases_and_constraints_hold() {
        let c = |x: f64, y: f64| 4.0 * (x - 0.5).powi(2) + (y - 0.5).powi(2);
        let pr = problem(&lattice(3), c, 8, 3, 3.0, Some(0.01));
        let opts = ContinuumOptions {
            max_iter: 25,
            ..Default::default()
        };
        let res = minimize_continuum(&pr, &opts).unwrap();
        assert_eq!(res.monotonicity_violations(), 0);
        assert!(res.energy <= res.energy_history[0]);
        for con in pr.constraints() {
            // moved constraints are carried by nearby nodes, not the corner itself
            let v = res.field.value(con.point[0], con.point[1]).unwrap();
            assert!((v - con.label).abs() < 0.05);
        }
    }

    #[test]
    fn single_patch_has_no_interface_system() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let cs = ConstraintSet::from_fn(&pts, |x, y| x * y).unwrap();
        let d = build_patches(&cs, 7).unwrap();
        let pr = ContinuumProblem::new(
            d,
            cs,
            &uniform(),
            3.0,
            WeightProfile::Indicator,
            OuterBoundary::Natural { beta: 0.01 },
        )
        .unwrap();
        assert_eq!(pr.shared_count(), 0);
        let s = FlowState::new(&pr, thin_plate_initial(&pr)).unwrap();
        let next = semi_implicit_step(&s, &pr, 1e-4).unwrap();
        assert_eq!(next.algebraic_residual, 0.0);
        assert!(semi_implicit_step(&s, &pr, 0.0).is_err());
    }

    #[test]
    fn thin_plate_interpolates_constraints() {
        let c = |x: f64, y: f64| x * x - y;
        let pr = problem(
            &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5]],
            c,
            7,
            2,
            3.0,
            Some(0.0),
        );
        let u = thin_plate_initial(&pr);
        for (g, node) in pr.domain().nodes().iter().enumerate() {
            if node.point == [0.0, 1.0] {
                assert!((u[g] + 1.0).abs() < 1e-10);
            }
            assert!((-1.0..=1.0).contains(&u[g]));
        }
    }
}
