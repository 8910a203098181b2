use std::fmt;

use rayon::prelude::*;

use super::kde::{Kde, TensorValues};
use super::reference::ReferenceDensity;
use super::skde::{fit_spline, SplineConfig, TensorSpline};
use crate::error::{Error, Result};

/// Relative floor applied to every density field.
pub const FLOOR_FRACTION: f64 = 1e-3;

/// Side of the uniform grid on which the field maximum is measured.
const FLOOR_PROBE: usize = 65;

/// Slack for round-off when checking that a query lies in `[0,1]²`.
const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DensityKind {
    Exact,
    Kde,
    Skde,
}

impl DensityKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DensityKind::Exact => "exact",
            DensityKind::Kde => "kde",
            DensityKind::Skde => "skde",
        }
    }
}

impl fmt::Display for DensityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DensityKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(DensityKind::Exact),
            "kde" => Ok(DensityKind::Kde),
            "skde" => Ok(DensityKind::Skde),
            other => Err(Error::InvalidArgument(format!(
                "unknown estimator `{other}`"
            ))),
        }
    }
}

/// Provenance of a field, written next to grid dumps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldMeta {
    pub h: Option<f64>,
    pub lambda: Option<f64>,
    pub knots: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
enum Repr {
    Exact(ReferenceDensity),
    Kde(Kde),
    Skde(TensorSpline),
}

/// A density on `[0,1]²`, clamped below at `floor`.
///
/// Gradients come from the underlying representation and vanish wherever
/// the floor is active.
#[derive(Debug, Clone)]
pub struct DensityField {
    repr: Repr,
    floor: f64,
    meta: FieldMeta,
}

impl DensityField {
    fn with_floor(repr: Repr, meta: FieldMeta) -> Self {
        let mut field = Self {
            repr,
            floor: 0.0,
            meta,
        };
        let step = 1.0 / (FLOOR_PROBE - 1) as f64;
        let pts: Vec<[f64; 2]> = (0..FLOOR_PROBE * FLOOR_PROBE)
            .map(|k| {
                [
                    (k % FLOOR_PROBE) as f64 * step,
                    (k / FLOOR_PROBE) as f64 * step,
                ]
            })
            .collect();
        let max = pts
            .par_iter()
            .map(|p| field.raw(p[0], p[1]))
            .reduce(|| 0.0, f64::max);
        field.floor = FLOOR_FRACTION * max;
        if !(field.floor > 0.0) {
            // an identically non-positive estimate still needs an elliptic floor
            field.floor = f64::MIN_POSITIVE.sqrt();
        }
        field
    }

    pub fn exact(density: ReferenceDensity) -> Self {
        Self::with_floor(Repr::Exact(density), FieldMeta::default())
    }

    pub fn kde(kde: Kde, seed: Option<u64>) -> Self {
        let meta = FieldMeta {
            h: Some(kde.bandwidth()),
            seed,
            ..Default::default()
        };
        Self::with_floor(Repr::Kde(kde), meta)
    }

    pub fn skde(
        spline: TensorSpline,
        config: &SplineConfig,
        h: Option<f64>,
        seed: Option<u64>,
    ) -> Self {
        let meta = FieldMeta {
            h,
            lambda: Some(config.lambda()),
            knots: Some(config.len()),
            seed,
        };
        Self::with_floor(Repr::Skde(spline), meta)
    }

    /// Fits the spline estimate to a KDE sampled at the knot lattice.
    pub fn skde_from_kde(kde: &Kde, config: &SplineConfig, seed: Option<u64>) -> Result<Self> {
        let xs: Vec<f64> = (0..config.side()).map(|i| config.knots()[i][0]).collect();
        let values = kde.values_on_tensor_grid(&xs, &xs);
        let spline = fit_spline(&values, config)?;
        Ok(Self::skde(spline, config, Some(kde.bandwidth()), seed))
    }

    pub fn kind(&self) -> DensityKind {
        match self.repr {
            Repr::Exact(_) => DensityKind::Exact,
            Repr::Kde(_) => DensityKind::Kde,
            Repr::Skde(_) => DensityKind::Skde,
        }
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn meta(&self) -> &FieldMeta {
        &self.meta
    }

    fn raw(&self, x: f64, y: f64) -> f64 {
        match &self.repr {
            Repr::Exact(d) => d.value(x, y),
            Repr::Kde(k) => k.value_at([x, y]),
            Repr::Skde(s) => s.value(x, y),
        }
    }

    fn raw_gradient(&self, x: f64, y: f64) -> [f64; 2] {
        match &self.repr {
            Repr::Exact(d) => d.gradient(x, y),
            Repr::Kde(k) => k.gradient_at([x, y]),
            Repr::Skde(s) => s.gradient(x, y),
        }
    }

    /// Clamped value; no domain check.
    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.raw(x, y).max(self.floor)
    }

    pub fn gradient(&self, x: f64, y: f64) -> Result<[f64; 2]> {
        check_domain(x, y)?;
        if self.raw(x, y) < self.floor {
            Ok([0.0, 0.0])
        } else {
            Ok(self.raw_gradient(x, y))
        }
    }

    pub fn values(&self, points: &[[f64; 2]]) -> Vec<f64> {
        points.par_iter().map(|p| self.value(p[0], p[1])).collect()
    }

    /// Clamped values on `xs × ys`, x-fastest.
    pub fn values_on_tensor_grid(&self, xs: &[f64], ys: &[f64]) -> Vec<f64> {
        let mut v = match &self.repr {
            Repr::Kde(k) => k.values_on_tensor_grid(xs, ys),
            _ => {
                let pts: Vec<[f64; 2]> = ys
                    .iter()
                    .flat_map(|&y| xs.iter().map(move |&x| [x, y]))
                    .collect();
                pts.par_iter().map(|p| self.raw(p[0], p[1])).collect()
            }
        };
        v.iter_mut().for_each(|x| *x = x.max(self.floor));
        v
    }

    /// Clamped values and gradients on `xs × ys`, x-fastest.
    pub fn on_tensor_grid(&self, xs: &[f64], ys: &[f64]) -> TensorValues {
        let (nx, ny) = (xs.len(), ys.len());
        let mut out = match &self.repr {
            Repr::Kde(k) => k.on_tensor_grid(xs, ys),
            _ => {
                let pts: Vec<[f64; 2]> = ys
                    .iter()
                    .flat_map(|&y| xs.iter().map(move |&x| [x, y]))
                    .collect();
                let acc: Vec<(f64, [f64; 2])> = pts
                    .par_iter()
                    .map(|p| (self.raw(p[0], p[1]), self.raw_gradient(p[0], p[1])))
                    .collect();
                TensorValues {
                    nx,
                    ny,
                    values: acc.iter().map(|a| a.0).collect(),
                    dx: acc.iter().map(|a| a.1[0]).collect(),
                    dy: acc.iter().map(|a| a.1[1]).collect(),
                }
            }
        };
        for k in 0..nx * ny {
            if out.values[k] < self.floor {
                out.values[k] = self.floor;
                out.dx[k] = 0.0;
                out.dy[k] = 0.0;
            }
        }
        out
    }
}

fn check_domain(x: f64, y: f64) -> Result<()> {
    let inside = |t: f64| (-DOMAIN_SLACK..=1.0 + DOMAIN_SLACK).contains(&t);
    if inside(x) && inside(y) {
        Ok(())
    } else {
        Err(Error::OutOfDomain { x, y })
    }
}

/// Fits the spline density estimate to `kde_at_knots` (x-fastest over the knot lattice).
pub fn skde_fit(kde_at_knots: &[f64], config: &SplineConfig) -> Result<DensityField> {
    let spline = fit_spline(kde_at_knots, config)?;
    Ok(DensityField::skde(spline, config, None, None))
}

/// `∇ρ` at each query point.
pub fn density_gradient(field: &DensityField, query: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    query
        .par_iter()
        .map(|p| field.gradient(p[0], p[1]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::kde::Kernel;
    use crate::density::reference::{reference_density, DensityId};

    #[test]
    fn exact_gradients() {
        let f1 = DensityField::exact(reference_density(DensityId::Rho1));
        let g = density_gradient(&f1, &[[0.2, 0.3], [1.0, 0.0]]).unwrap();
        assert_eq!(g, vec![[0.0, 0.0], [0.0, 0.0]]);
        let f2 = DensityField::exact(reference_density(DensityId::Rho2));
        let g = f2.gradient(0.25, 0.8).unwrap();
        assert!((g[0] - 0.8 / 0.45).abs() < 1e-8 && (g[1] - 0.25 / 0.45).abs() < 1e-8);
    }

    #[test]
    fn out_of_domain_rejected() {
        let f = DensityField::exact(reference_density(DensityId::Rho1));
        assert!(matches!(
            f.gradient(1.5, 0.5),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(density_gradient(&f, &[[0.5, -0.1]]).is_err());
    }

    #[test]
    fn skde_affine_gradient() {
        let cfg = SplineConfig::uniform(121, 1e-4).unwrap();
        let vals: Vec<f64> = cfg
            .knots()
            .iter()
            .map(|k| 1.0 + 0.5 * k[0] - 0.25 * k[1])
            .collect();
        let field = skde_fit(&vals, &cfg).unwrap();
        assert_eq!(field.kind(), DensityKind::Skde);
        let g = density_gradient(&field, &[[0.3, 0.4], [0.9, 0.1]]).unwrap();
        for v in g {
            assert!((v[0] - 0.5).abs() < 1e-6 && (v[1] + 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn floor_clamps_values() {
        // one sample in a corner: most of the square sits far below the peak
        let kde = Kde::new(&[[0.0, 0.0]], 0.05, Kernel::Epanechnikov).unwrap();
        let f = DensityField::kde(kde, None);
        let peak = 2.0 / std::f64::consts::PI / 0.0025;
        assert!((f.floor() - 1e-3 * peak).abs() < 1e-9 * peak);
        assert_eq!(f.value(0.8, 0.8), f.floor());
        assert_eq!(f.gradient(0.8, 0.8).unwrap(), [0.0, 0.0]);
        let t = f.on_tensor_grid(&[0.5, 0.9], &[0.5]);
        assert!(t.values.iter().all(|&v| v >= f.floor()));
    }
}
