use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{chebyshev_nodes, quadrature_2d};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DensityId {
    /// Uniform on the unit square.
    Rho1,
    /// Proportional to `xy + 0.2`.
    Rho2,
    /// Proportional to `cos(6π((x-0.5)² + (y-0.2)²))/3 + 0.5`.
    Rho3,
}

impl DensityId {
    pub const ALL: [DensityId; 3] = [DensityId::Rho1, DensityId::Rho2, DensityId::Rho3];

    pub fn as_str(&self) -> &'static str {
        match self {
            DensityId::Rho1 => "rho1",
            DensityId::Rho2 => "rho2",
            DensityId::Rho3 => "rho3",
        }
    }
}

impl fmt::Display for DensityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DensityId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rho1" => Ok(DensityId::Rho1),
            "rho2" => Ok(DensityId::Rho2),
            "rho3" => Ok(DensityId::Rho3),
            other => Err(Error::UnknownDensity(other.to_string())),
        }
    }
}

/// One of the three test densities on `[0,1]²`, normalised to unit mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceDensity {
    id: DensityId,
    normalization: f64,
}

fn unnormalized(id: DensityId, x: f64, y: f64) -> f64 {
    match id {
        DensityId::Rho1 => 1.0,
        DensityId::Rho2 => x * y + 0.2,
        DensityId::Rho3 => {
            let r2 = (x - 0.5).powi(2) + (y - 0.2).powi(2);
            (6.0 * PI * r2).cos() / 3.0 + 0.5
        }
    }
}

fn unnormalized_gradient(id: DensityId, x: f64, y: f64) -> [f64; 2] {
    match id {
        DensityId::Rho1 => [0.0, 0.0],
        DensityId::Rho2 => [y, x],
        DensityId::Rho3 => {
            let r2 = (x - 0.5).powi(2) + (y - 0.2).powi(2);
            let s = -(6.0 * PI * r2).sin() / 3.0 * 6.0 * PI * 2.0;
            [s * (x - 0.5), s * (y - 0.2)]
        }
    }
}

/// Looks up a reference density, normalising it by Clenshaw–Curtis quadrature.
pub fn reference_density(id: DensityId) -> ReferenceDensity {
    ReferenceDensity::new(id)
}

impl ReferenceDensity {
    pub fn new(id: DensityId) -> Self {
        let g = chebyshev_nodes(96, (0.0, 1.0)).expect("valid grid");
        let q = quadrature_2d(&g, &g);
        let normalization = q.integrate(|x, y| unnormalized(id, x, y));
        Self { id, normalization }
    }

    pub fn id(&self) -> DensityId {
        self.id
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    #[inline]
    pub fn value(&self, x: f64, y: f64) -> f64 {
        unnormalized(self.id, x, y) / self.normalization
    }

    #[inline]
    pub fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        let g = unnormalized_gradient(self.id, x, y);
        [g[0] / self.normalization, g[1] / self.normalization]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho1_is_one() {
        let d = reference_density(DensityId::Rho1);
        for (x, y) in [(0.0, 0.0), (0.3, 0.9), (1.0, 1.0)] {
            assert!((d.value(x, y) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rho2_normalization() {
        let d = reference_density(DensityId::Rho2);
        assert!((d.normalization() - 0.45).abs() < 1e-14);
        assert!((d.value(0.0, 0.0) - 0.2 / 0.45).abs() < 1e-13);
        assert!((d.value(0.0, 0.0) - 0.4444).abs() < 1e-4);
        let g = d.gradient(0.3, 0.7);
        assert!((g[0] - 0.7 / 0.45).abs() < 1e-12 && (g[1] - 0.3 / 0.45).abs() < 1e-12);
    }

    #[test]
    fn unit_mass_and_positive() {
        let g = chebyshev_nodes(64, (0.0, 1.0)).unwrap();
        let q = quadrature_2d(&g, &g);
        for id in DensityId::ALL {
            let d = reference_density(id);
            assert!(
                (q.integrate(|x, y| d.value(x, y)) - 1.0).abs() < 1e-6,
                "{id}"
            );
            assert!(q.nodes.iter().all(|p| d.value(p[0], p[1]) > 0.0));
        }
    }

    #[test]
    fn rho3_gradient_matches_differences() {
        let d = reference_density(DensityId::Rho3);
        let h = 1e-6;
        for (x, y) in [(0.2, 0.3), (0.7, 0.55)] {
            let g = d.gradient(x, y);
            let fx = (d.value(x + h, y) - d.value(x - h, y)) / (2.0 * h);
            let fy = (d.value(x, y + h) - d.value(x, y - h)) / (2.0 * h);
            assert!((g[0] - fx).abs() < 1e-6 && (g[1] - fy).abs() < 1e-6);
        }
    }

    #[test]
    fn parse_ids() {
        assert_eq!("RHO2".parse::<DensityId>().unwrap(), DensityId::Rho2);
        assert!(matches!(
            "rho4".parse::<DensityId>(),
            Err(Error::UnknownDensity(_))
        ));
    }
}
