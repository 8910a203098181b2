//! Penalised tensor-product cubic spline fit to density values at knots.

use crate::error::{Error, Result};
use crate::numerics::banded::BandedSym;
use crate::numerics::quadrature::gauss_legendre;

/// Knot lattice and smoothing weight for the spline fit.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineConfig {
    knots: Vec<[f64; 2]>,
    side: usize,
    lambda: f64,
}

impl SplineConfig {
    /// Uniform `√T × √T` lattice on `[0,1]²`, x-fastest.
    pub fn uniform(t: usize, lambda: f64) -> Result<Self> {
        let side = (t as f64).sqrt().round() as usize;
        if side * side != t {
            return Err(Error::SplineConfig(format!(
                "T={t} is not a perfect square"
            )));
        }
        if side < 2 {
            return Err(Error::SplineConfig(format!(
                "T={t} gives fewer than 2 knots per side"
            )));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::SplineConfig(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        let step = 1.0 / (side - 1) as f64;
        let knots = (0..t)
            .map(|k| [(k % side) as f64 * step, (k / side) as f64 * step])
            .collect();
        Ok(Self {
            knots,
            side,
            lambda,
        })
    }

    pub fn knots(&self) -> &[[f64; 2]] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Minimum distance between distinct knots.
    pub fn separation(&self) -> f64 {
        1.0 / (self.side - 1) as f64
    }
}

/// Uniform cubic B-spline basis on `[0,1]` with `intervals` pieces and `intervals + 3` functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicBasis {
    intervals: usize,
}

impl CubicBasis {
    pub fn new(intervals: usize) -> Self {
        assert!(intervals >= 1);
        Self { intervals }
    }

    pub fn len(&self) -> usize {
        self.intervals + 3
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn spacing(&self) -> f64 {
        1.0 / self.intervals as f64
    }

    /// First basis index with support at `x` and the local coordinate in `[0,1]`.
    fn locate(&self, x: f64) -> (usize, f64) {
        let s = x.clamp(0.0, 1.0) * self.intervals as f64;
        let m = (s.floor() as usize).min(self.intervals - 1);
        (m, s - m as f64)
    }

    /// The four nonzero basis values (or derivatives of order `deriv`) at `x`, starting at the returned index.
    pub fn eval(&self, x: f64, deriv: usize) -> (usize, [f64; 4]) {
        let (m, t) = self.locate(x);
        let u = 1.0 - t;
        let h = self.spacing();
        let v = match deriv {
            0 => [
                u * u * u / 6.0,
                (3.0 * t * t * t - 6.0 * t * t + 4.0) / 6.0,
                (-3.0 * t * t * t + 3.0 * t * t + 3.0 * t + 1.0) / 6.0,
                t * t * t / 6.0,
            ],
            1 => [
                -u * u / (2.0 * h),
                (3.0 * t * t - 4.0 * t) / (2.0 * h),
                (-3.0 * t * t + 2.0 * t + 1.0) / (2.0 * h),
                t * t / (2.0 * h),
            ],
            2 => {
                let s = 1.0 / (h * h);
                [u * s, (3.0 * t - 2.0) * s, (1.0 - 3.0 * t) * s, t * s]
            }
            _ => [0.0; 4],
        };
        (m, v)
    }

    /// Banded Gram matrix `∫₀¹ B_k^{(r)} B_l^{(r)}`, stored as `g[k][l - k + 3]`.
    pub fn gram(&self, r: usize) -> Vec<[f64; 7]> {
        let n = self.len();
        let mut g = vec![[0.0; 7]; n];
        let (gx, gw) = gauss_legendre(4);
        let h = self.spacing();
        for m in 0..self.intervals {
            for (xi, wi) in gx.iter().zip(&gw) {
                let x = (m as f64 + 0.5 * (xi + 1.0)) * h;
                let w = 0.5 * h * wi;
                let (k0, v) = self.eval(x, r);
                for a in 0..4 {
                    for b in 0..4 {
                        g[k0 + a][b + 3 - a] += w * v[a] * v[b];
                    }
                }
            }
        }
        g
    }
}

/// A fitted tensor cubic spline `u(x,y) = Σ c_{kl} B_k(x) B_l(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpline {
    basis: CubicBasis,
    coeffs: Vec<f64>,
}

impl TensorSpline {
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    fn combine(&self, x: f64, y: f64, dx: usize, dy: usize) -> f64 {
        let nb = self.basis.len();
        let (i0, bx) = self.basis.eval(x, dx);
        let (j0, by) = self.basis.eval(y, dy);
        let mut s = 0.0;
        for (b, vy) in by.iter().enumerate() {
            let row = (j0 + b) * nb + i0;
            for (a, vx) in bx.iter().enumerate() {
                s += self.coeffs[row + a] * vx * vy;
            }
        }
        s
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.combine(x, y, 0, 0)
    }

    pub fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        [self.combine(x, y, 1, 0), self.combine(x, y, 0, 1)]
    }

    pub fn hessian(&self, x: f64, y: f64) -> [f64; 3] {
        [
            self.combine(x, y, 2, 0),
            self.combine(x, y, 1, 1),
            self.combine(x, y, 0, 2),
        ]
    }

    /// `‖∇²u‖²_{L²}` over `[0,1]²` (Frobenius norm of the Hessian).
    pub fn roughness(&self) -> f64 {
        let p = penalty_matrix(self.basis, 1.0);
        p.quad_form(&self.coeffs)
    }
}

fn penalty_matrix(basis: CubicBasis, scale: f64) -> BandedSym {
    let nb = basis.len();
    let g: Vec<Vec<[f64; 7]>> = (0..3).map(|r| basis.gram(r)).collect();
    let at = |r: usize, k: usize, l: usize| -> f64 {
        let d = l as isize - k as isize + 3;
        if (0..7).contains(&d) {
            g[r][k][d as usize]
        } else {
            0.0
        }
    };
    let mut p = BandedSym::zeros(nb * nb, 3 * nb + 3);
    for ky in 0..nb {
        for kx in 0..nb {
            let i = ky * nb + kx;
            for ly in ky.saturating_sub(3)..(ky + 4).min(nb) {
                for lx in kx.saturating_sub(3)..(kx + 4).min(nb) {
                    let j = ly * nb + lx;
                    if j > i {
                        continue;
                    }
                    let v = at(2, kx, lx) * at(0, ky, ly)
                        + 2.0 * at(1, kx, lx) * at(1, ky, ly)
                        + at(0, kx, lx) * at(2, ky, ly);
                    p.add(i, j, scale * v);
                }
            }
        }
    }
    p
}

/// Minimises `(1/T) Σ (u(t_i) − f_i)² + λ‖∇²u‖²` over cubic tensor splines whose
/// breakpoints coincide with the knot lattice.
pub fn fit_spline(values: &[f64], config: &SplineConfig) -> Result<TensorSpline> {
    let t = config.len();
    if values.len() != t {
        return Err(Error::SplineConfig(format!(
            "{} values for {t} knots",
            values.len()
        )));
    }
    let basis = CubicBasis::new(config.side() - 1);
    let nb = basis.len();
    let mut a = penalty_matrix(basis, config.lambda());
    let mut rhs = vec![0.0; nb * nb];
    let w = 1.0 / t as f64;
    for (knot, &f) in config.knots().iter().zip(values) {
        let (i0, bx) = basis.eval(knot[0], 0);
        let (j0, by) = basis.eval(knot[1], 0);
        let mut idx = [0usize; 16];
        let mut val = [0.0; 16];
        for b in 0..4 {
            for c in 0..4 {
                idx[b * 4 + c] = (j0 + b) * nb + i0 + c;
                val[b * 4 + c] = by[b] * bx[c];
            }
        }
        for r in 0..16 {
            rhs[idx[r]] += w * f * val[r];
            for s in 0..=r {
                let (i, j) = if idx[r] >= idx[s] {
                    (idx[r], idx[s])
                } else {
                    (idx[s], idx[r])
                };
                a.add(i, j, w * val[r] * val[s]);
            }
        }
    }
    let chol = a.cholesky()?;
    let cond = chol.condition_estimate();
    if !(cond < 1e14) {
        return Err(Error::IllPosedSpline { condition: cond });
    }
    Ok(TensorSpline {
        basis,
        coeffs: chol.solve(&rhs),
    })
}
