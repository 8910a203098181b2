use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;

use super::problem::ContinuumProblem;
use crate::density::WeightProfile;
use crate::error::{Error, Result};
use crate::numerics::gauss_legendre;

/// `σ_η Σ_patches Σ_nodes w |∇u|^p ρ²` with spectral gradients and Clenshaw–Curtis weights.
pub fn local_energy(u: &[f64], problem: &ContinuumProblem) -> f64 {
    let domain = problem.domain();
    let half_p = 0.5 * problem.p();
    let total: f64 = domain
        .patches()
        .par_iter()
        .enumerate()
        .map(|(pid, patch)| {
            let ul = domain.gather(pid, u);
            let ux = patch.dx.apply(&ul);
            let uy = patch.dy.apply(&ul);
            let rho2 = problem.rho_squared(pid);
            (0..ul.len())
                .map(|l| patch.weights[l] * rho2[l] * (ux[l] * ux[l] + uy[l] * uy[l]).powf(half_p))
                .sum::<f64>()
        })
        .sum();
    problem.sigma() * total
}

/// Quadrature controls for [`nonlocal_energy`].
#[derive(Debug, Clone, PartialEq)]
pub struct NonlocalOptions {
    /// Outer integration rectangle `[[x0, x1], [y0, y1]]` inside `[0,1]²`.
    pub region: [[f64; 2]; 2],
    /// Gauss–Legendre panels per unit length of the outer rectangle.
    pub outer_panels: usize,
    pub outer_order: usize,
    pub radial_order: usize,
    /// Gauss–Legendre points per angular sector.
    pub angular_order: usize,
    /// Angular sectors per quarter turn.
    pub angular_panels: usize,
    /// Smallest interaction radius the field can resolve.
    pub resolution: f64,
}

impl Default for NonlocalOptions {
    fn default() -> Self {
        Self {
            region: [[0.0, 1.0], [0.0, 1.0]],
            outer_panels: 16,
            outer_order: 4,
            radial_order: 12,
            angular_order: 12,
            angular_panels: 2,
            resolution: 0.0,
        }
    }
}

/// Composite Gauss–Legendre nodes on `[a, b]` with extra breakpoints.
fn composite_rule(
    a: f64,
    b: f64,
    breaks: &[f64],
    per_unit: usize,
    order: usize,
) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(order);
    let mut cuts: Vec<f64> = vec![a, b];
    cuts.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
    cuts.sort_by(f64::total_cmp);
    let (mut xs, mut ws) = (Vec::new(), Vec::new());
    for w in cuts.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let panels = ((len * per_unit as f64).ceil() as usize).max(1);
        let h = len / panels as f64;
        for k in 0..panels {
            let lo = w[0] + k as f64 * h;
            for (x, wt) in gx.iter().zip(&gw) {
                xs.push(lo + 0.5 * h * (x + 1.0));
                ws.push(0.5 * h * wt);
            }
        }
    }
    (xs, ws)
}

/// Distance from `x` (inside the unit square) to its boundary along direction `θ`.
fn ray_to_boundary(x: [f64; 2], theta: f64) -> f64 {
    let (c, s) = (theta.cos(), theta.sin());
    let mut t = f64::INFINITY;
    if c > 1e-15 {
        t = t.min((1.0 - x[0]) / c);
    } else if c < -1e-15 {
        t = t.min(-x[0] / c);
    }
    if s > 1e-15 {
        t = t.min((1.0 - x[1]) / s);
    } else if s < -1e-15 {
        t = t.min(-x[1] / s);
    }
    t.max(0.0)
}

/// Nonlocal energy `ε^{−p} ∬ η_ε(|x−z|) |u(x) − u(z)|^p ρ(x) ρ(z) dz dx` with `x` in the
/// outer rectangle and `z` in `[0,1]²`, `η_ε = ε^{−2} η(·/ε)`.
///
/// The inner integral is taken in polar coordinates around `x`, cut at the interaction
/// radius and at the square's boundary.
pub fn nonlocal_energy(
    u: &(dyn Fn(f64, f64) -> f64 + Sync),
    rho: &(dyn Fn(f64, f64) -> f64 + Sync),
    eta: WeightProfile,
    eps: f64,
    p: f64,
    opts: &NonlocalOptions,
) -> Result<f64> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {eps}"
        )));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "p must be at least 1, got {p}"
        )));
    }
    let support = eta.support().ok_or_else(|| {
        Error::InvalidArgument(format!("weight profile {eta} has unbounded support"))
    })?;
    let radius = support * eps;
    if radius <= opts.resolution {
        return Err(Error::Resolution {
            eps,
            resolution: opts.resolution,
        });
    }
    let [[x0, x1], [y0, y1]] = opts.region;
    if !(0.0 <= x0 && x0 < x1 && x1 <= 1.0 && 0.0 <= y0 && y0 < y1 && y1 <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "region {:?} is not inside the unit square",
            opts.region
        )));
    }
    let breaks = [radius, 1.0 - radius];
    let (xs, wx) = composite_rule(x0, x1, &breaks, opts.outer_panels, opts.outer_order);
    let (ys, wy) = composite_rule(y0, y1, &breaks, opts.outer_panels, opts.outer_order);
    let (gr, gwr) = gauss_legendre(opts.radial_order);
    let (ga, gwa) = gauss_legendre(opts.angular_order);
    let scale = eps.powf(-p - 2.0);

    let inner = |x: [f64; 2]| -> f64 {
        let ux = u(x[0], x[1]);
        // angular breakpoints: quarter turns and the directions of the square's corners
        let mut cuts: Vec<f64> = (0..=4 * opts.angular_panels)
            .map(|k| k as f64 * FRAC_PI_2 / opts.angular_panels as f64)
            .collect();
        for c in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]] {
            let (dx, dy) = (c[0] - x[0], c[1] - x[1]);
            if dx * dx + dy * dy < radius * radius {
                cuts.push(dy.atan2(dx).rem_euclid(2.0 * PI));
            }
        }
        cuts.sort_by(f64::total_cmp);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a <= 1e-14 {
                continue;
            }
            for (t, wt) in ga.iter().zip(&gwa) {
                let theta = a + 0.5 * (b - a) * (t + 1.0);
                let rmax = radius.min(ray_to_boundary(x, theta));
                if rmax <= 0.0 {
                    continue;
                }
                let (c, s) = (theta.cos(), theta.sin());
                let mut line = 0.0;
                for (q, wq) in gr.iter().zip(&gwr) {
                    let r = 0.5 * rmax * (q + 1.0);
                    let z = [x[0] + r * c, x[1] + r * s];
                    line += wq
                        * eta.eval(r / eps)
                        * (u(z[0], z[1]) - ux).abs().powf(p)
                        * rho(z[0], z[1])
                        * r;
                }
                total += 0.5 * (b - a) * wt * 0.5 * rmax * line;
            }
        }
        total
    };

    let total: f64 = (0..ys.len())
        .into_par_iter()
        .map(|j| {
            xs.iter()
                .zip(&wx)
                .map(|(&x, &w)| w * wy[j] * rho(x, ys[j]) * inner([x, ys[j]]))
                .sum::<f64>()
        })
        .sum();
    Ok(scale * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::ConstraintSet;
    use crate::continuum::{build_patches_with, gradient_flow_rhs, FlowState, OuterBoundary};
    use crate::density::{reference_density, sigma_eta, DensityField, DensityId};

    fn unit_problem(p: f64, n: usize, k: usize) -> ContinuumProblem {
        let c = ConstraintSet::from_fn(&[[0.0, 0.0], [1.0, 1.0]], |x, _| x).unwrap();
        let d = build_patches_with(&c, n, k).unwrap();
        let rho = DensityField::exact(reference_density(DensityId::Rho1));
        ContinuumProblem::new(
            d,
            c,
            &rho,
            p,
            WeightProfile::Indicator,
            OuterBoundary::Natural { beta: 0.0 },
        )
        .unwrap()
    }

    fn nodal(pr: &ContinuumProblem, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        pr.domain().points().iter().map(|q| f(q[0], q[1])).collect()
    }

    #[test]
    fn local_energy_examples() {
        let pr = unit_problem(2.0, 10, 2);
        let s = pr.sigma();
        assert!(local_energy(&nodal(&pr, |_, _| 3.0), &pr) < 1e-20);
        assert!((local_energy(&nodal(&pr, |x, _| x), &pr) - s).abs() < 1e-12);
        assert!((local_energy(&nodal(&pr, |x, _| x * x), &pr) - s * 4.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn rhs_matches_energy_derivative() {
        // smooth bump vanishing to second order on the boundary, so no flux term appears
        let pr = unit_problem(3.0, 16, 1);
        let u = nodal(&pr, |x, y| (1.3 * x).sin() + 0.5 * y * y + 0.2 * x * y);
        let v = nodal(&pr, |x, y| {
            (x * (1.0 - x) * y * (1.0 - y)).powi(2) * (1.0 + x)
        });
        let state = FlowState {
            u: u.clone(),
            time: 0.0,
            algebraic_residual: 0.0,
        };
        let rhs = gradient_flow_rhs(&state, &pr);
        let h = 1e-5;
        let shifted = |t: f64| -> Vec<f64> { u.iter().zip(&v).map(|(a, b)| a + t * b).collect() };
        let de = (local_energy(&shifted(h), &pr) - local_energy(&shifted(-h), &pr)) / (2.0 * h);
        let patch = &pr.domain().patches()[0];
        let pairing: f64 = patch
            .global
            .iter()
            .enumerate()
            .map(|(l, &g)| patch.weights[l] * v[g] * rhs[g])
            .sum();
        let expect = -pr.p() * pr.sigma() * pairing;
        assert!(
            (de - expect).abs() < 1e-6 * expect.abs(),
            "{de} vs {expect}"
        );
    }

    fn one(_: f64, _: f64) -> f64 {
        1.0
    }

    #[test]
    fn nonlocal_affine_matches_sigma() {
        let u = |x: f64, _: f64| x;
        let opts = NonlocalOptions {
            region: [[0.25, 0.75], [0.25, 0.75]],
            ..Default::default()
        };
        let target = sigma_eta(WeightProfile::Indicator, 3.0, 2).unwrap() * 0.25;
        for eps in [0.1, 0.05] {
            let e = nonlocal_energy(&u, &one, WeightProfile::Indicator, eps, 3.0, &opts).unwrap();
            assert!(
                (e - target).abs() < 1e-3 * target,
                "eps={eps}: {e} vs {target}"
            );
        }
    }

    #[test]
    fn nonlocal_constant_and_homogeneity() {
        let opts = NonlocalOptions {
            outer_panels: 4,
            ..Default::default()
        };
        let c = |_: f64, _: f64| 2.0;
        assert_eq!(
            nonlocal_energy(&c, &one, WeightProfile::Indicator, 0.2, 3.0, &opts).unwrap(),
            0.0
        );
        let u = |x: f64, y: f64| (x * 3.0).sin() * y;
        let u2 = |x: f64, y: f64| 2.0 * (x * 3.0).sin() * y;
        let e1 = nonlocal_energy(&u, &one, WeightProfile::Gaussian, 0.1, 3.0, &opts).unwrap();
        let e2 = nonlocal_energy(&u2, &one, WeightProfile::Gaussian, 0.1, 3.0, &opts).unwrap();
        assert!((e2 - 8.0 * e1).abs() < 1e-12 * e2);
    }

    #[test]
    fn nonlocal_full_square_loses_boundary_mass() {
        // near the boundary the ball is cut, so the full-square value falls short of σ
        let u = |x: f64, _: f64| x;
        let opts = NonlocalOptions::default();
        let e = nonlocal_energy(&u, &one, WeightProfile::Indicator, 0.1, 3.0, &opts).unwrap();
        let sigma = sigma_eta(WeightProfile::Indicator, 3.0, 2).unwrap();
        assert!(e < sigma && e > 0.8 * sigma);
    }

    #[test]
    fn nonlocal_resolution_error() {
        let opts = NonlocalOptions {
            resolution: 0.05,
            ..Default::default()
        };
        let u = |x: f64, _: f64| x;
        assert!(matches!(
            nonlocal_energy(&u, &one, WeightProfile::Indicator, 0.01, 3.0, &opts),
            Err(Error::Resolution { .. })
        ));
    }
}
