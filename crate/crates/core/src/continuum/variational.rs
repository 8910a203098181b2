//! Gradient flow of the quadrature energy itself.
//!
//! The discrete energy `Σ_P Σ_q w_q ρ²_q (|∇u|²_q + δ²)^{p/2}` is convex in the
//! nodal values, so its lumped-mass gradient flow descends it at every step and
//! Newton's method converges to its unique constrained minimiser. Interface and
//! natural boundary conditions hold weakly through the assembly.

use rayon::prelude::*;

use super::flow::{local_kinds, patch_flux, FlowState, Linearization, Local, PatchFlux};
use super::patches::Patch;
use super::problem::{ContinuumProblem, Unknown};
use crate::error::{Error, Result};
use crate::numerics::dense::{LuFactor, Matrix};

/// `Dxᵀ(w a ux) + Dyᵀ(w a uy)` on one patch.
fn local_gradient(patch: &Patch, flux: &PatchFlux) -> Vec<f64> {
    let n = patch.side();
    let dx = patch.dx.factor();
    let dy = patch.dy.factor();
    let mut g = vec![0.0; n * n];
    for q in 0..n * n {
        let (i, j) = (q % n, q / n);
        let wa = patch.weights[q] * flux.a[q];
        let (vx, vy) = (wa * flux.ux[q], wa * flux.uy[q]);
        for (c, &d) in dx.row(i).iter().enumerate() {
            g[j * n + c] += d * vx;
        }
        for (c, &d) in dy.row(j).iter().enumerate() {
            g[c * n + i] += d * vy;
        }
    }
    g
}

/// Dense `Σ_q w_q [Dx; Dy]_qᵀ A_q [Dx; Dy]_q` on one patch.
fn local_hessian(patch: &Patch, flux: &PatchFlux) -> Matrix {
    let n = patch.side();
    let dx = patch.dx.factor();
    let dy = patch.dy.factor();
    let [axx, axy, ayy] = &flux.tensor;
    let mut k = Matrix::zeros(n * n, n * n);
    let mut xs = vec![0usize; n];
    let mut ys = vec![0usize; n];
    for q in 0..n * n {
        let (i, j) = (q % n, q / n);
        let w = patch.weights[q];
        let rx = dx.row(i);
        let ry = dy.row(j);
        for c in 0..n {
            xs[c] = j * n + c;
            ys[c] = c * n + i;
        }
        for a in 0..n {
            let (fx, fy) = (w * rx[a], w * ry[a]);
            let row_x = k.row_mut(xs[a]);
            for b in 0..n {
                row_x[xs[b]] += fx * axx[q] * rx[b];
                row_x[ys[b]] += fx * axy[q] * ry[b];
            }
            let row_y = k.row_mut(ys[a]);
            for b in 0..n {
                row_y[xs[b]] += fy * axy[q] * rx[b];
                row_y[ys[b]] += fy * ayy[q] * ry[b];
            }
        }
    }
    k
}

/// Lumped mass of every global node.
fn lumped_mass(problem: &ContinuumProblem) -> Vec<f64> {
    let domain = problem.domain();
    let mut m = vec![0.0; domain.node_count()];
    for patch in domain.patches() {
        for (l, &g) in patch.global.iter().enumerate() {
            m[g] += patch.weights[l];
        }
    }
    m
}

/// Negative energy gradient divided by the lumped mass; zero at prescribed nodes.
///
/// At interior nodes this approximates `div(ρ²|∇u|^{p−2}∇u)`.
pub fn energy_gradient_rhs(state: &FlowState, problem: &ContinuumProblem) -> Vec<f64> {
    let domain = problem.domain();
    let parts: Vec<Vec<f64>> = (0..domain.patches().len())
        .into_par_iter()
        .map(|pid| {
            let patch = &domain.patches()[pid];
            let flux = patch_flux(
                problem,
                pid,
                &domain.gather(pid, &state.u),
                Linearization::Picard,
            );
            local_gradient(patch, &flux)
        })
        .collect();
    let mut g = vec![0.0; domain.node_count()];
    for (patch, part) in domain.patches().iter().zip(parts) {
        for (&node, v) in patch.global.iter().zip(part) {
            g[node] += v;
        }
    }
    let mass = lumped_mass(problem);
    (0..g.len())
        .map(|i| match problem.unknown(i) {
            Unknown::Known(_) => 0.0,
            _ => -g[i] / mass[i],
        })
        .collect()
}

/// Max norm of [`energy_gradient_rhs`].
pub fn energy_gradient_residual(state: &FlowState, problem: &ContinuumProblem) -> f64 {
    energy_gradient_rhs(state, problem)
        .iter()
        .fold(0.0, |m, v| m.max(v.abs()))
}

struct PatchSystem {
    kinds: Vec<Local>,
    shared: Vec<usize>,
    owned: Vec<usize>,
    /// Free rows of the local Hessian (mass term included), by local index.
    k: Matrix,
    grad: Vec<f64>,
    /// `A_OO⁻¹ [A_OS | −g_O]`.
    x: Matrix,
}

fn patch_system(
    problem: &ContinuumProblem,
    pid: usize,
    u: &[f64],
    tau: f64,
) -> Result<PatchSystem> {
    let domain = problem.domain();
    let patch = &domain.patches()[pid];
    let flux = patch_flux(problem, pid, &domain.gather(pid, u), Linearization::Newton);
    let grad = local_gradient(patch, &flux);
    let mut k = local_hessian(patch, &flux);
    for l in 0..patch.global.len() {
        k[(l, l)] += patch.weights[l] / tau;
    }
    let (kinds, owned, shared) = local_kinds(problem, patch);
    let ns = shared.len();
    let mut a_oo = Matrix::zeros(owned.len(), owned.len());
    let mut x = Matrix::zeros(owned.len(), ns + 1);
    for (r, &l) in owned.iter().enumerate() {
        for (c, &v) in k.row(l).iter().enumerate() {
            match kinds[c] {
                Local::Owned(oc) => a_oo[(r, oc)] = v,
                Local::Shared(sc) => x[(r, sc)] = v,
                Local::Known => {}
            }
        }
        x[(r, ns)] = -grad[l];
    }
    if !owned.is_empty() {
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
        lu.solve_in_place(&mut x);
    }
    Ok(PatchSystem {
        kinds,
        shared,
        owned,
        k,
        grad,
        x,
    })
}

/// One linearly implicit step `(M/τ + H) Δ = −∇E` of the energy flow, `H` the Newton Hessian.
pub fn variational_step(
    state: &FlowState,
    problem: &ContinuumProblem,
    tau: f64,
) -> Result<FlowState> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "tau must be positive, got {tau}"
        )));
    }
    let domain = problem.domain();
    let systems: Vec<PatchSystem> = (0..domain.patches().len())
        .into_par_iter()
        .map(|pid| patch_system(problem, pid, &state.u, tau))
        .collect::<Result<_>>()?;

    let ns = problem.shared_count();
    let mut schur = Matrix::zeros(ns, ns);
    let mut r = vec![0.0; ns];
    for sys in &systems {
        let last = sys.shared.len();
        for (l, kind) in sys.kinds.iter().enumerate() {
            let Local::Shared(sl) = *kind else { continue };
            let s = sys.shared[sl];
            r[s] -= sys.grad[l];
            let row = sys.k.row(l);
            for (c, &v) in row.iter().enumerate() {
                if let Local::Shared(k) = sys.kinds[c] {
                    schur[(s, sys.shared[k])] += v;
                }
            }
            for (o, &lo) in sys.owned.iter().enumerate() {
                let v = row[lo];
                if v == 0.0 {
                    continue;
                }
                let xrow = sys.x.row(o);
                for (k, &sg) in sys.shared.iter().enumerate() {
                    schur[(s, sg)] -= v * xrow[k];
                }
                r[s] -= v * xrow[last];
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
        if !(algebraic_residual <= super::flow::ALGEBRAIC_TOL) {
            return Err(Error::AlgebraicSolve {
                residual: algebraic_residual,
                limit: super::flow::ALGEBRAIC_TOL,
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
    for (pid, sys) in systems.iter().enumerate() {
        let patch = &domain.patches()[pid];
        let last = sys.shared.len();
        for (o, &l) in sys.owned.iter().enumerate() {
            let xrow = sys.x.row(o);
            let mut d = xrow[last];
            for (k, &sg) in sys.shared.iter().enumerate() {
                d -= xrow[k] * ds[sg];
            }
            u[patch.global[l]] += d;
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

/// `‖M⁻¹H‖∞` over the free rows of each patch.
pub fn variational_inf_norm(state: &FlowState, problem: &ContinuumProblem) -> f64 {
    let domain = problem.domain();
    let mass = lumped_mass(problem);
    (0..domain.patches().len())
        .into_par_iter()
        .map(|pid| {
            let patch = &domain.patches()[pid];
            let flux = patch_flux(
                problem,
                pid,
                &domain.gather(pid, &state.u),
                Linearization::Newton,
            );
            let k = local_hessian(patch, &flux);
            patch
                .global
                .iter()
                .enumerate()
                .filter(|(_, &g)| !matches!(problem.unknown(g), Unknown::Known(_)))
                .map(|(l, &g)| k.row(l).iter().map(|v| v.abs()).sum::<f64>() / mass[g])
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}
