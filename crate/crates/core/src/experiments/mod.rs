//! Density-error, minimiser-discrepancy and timing studies.

mod metrics;
mod minimizers;
mod report;
mod study;

pub use metrics::{
    error_metrics, median, mesh_axis, non_increasing, scattered_error, ErrorPair, Region,
    OMEGA_PRIME,
};
pub use minimizers::{minimizer_comparison, solve_continuum};
pub use report::{ErrorReport, ErrorRow, TrendFlag};
pub use study::density_error_study;

use crate::constraints::ConstraintSet;
use crate::continuum::Scheme;
use crate::density::{DensityId, DensityKind, Kernel, WeightProfile};
use crate::error::{Error, Result};
use crate::io::{GraphKind, RunConfig};

/// `C(x, y) = 4(x − ½)² + (y − ½)²`.
pub fn label_function(x: f64, y: f64) -> f64 {
    4.0 * (x - 0.5).powi(2) + (y - 0.5).powi(2)
}

/// The 4×4 lattice `{0, ⅓, ⅔, 1}²` labelled by [`label_function`].
pub fn constraint_labels() -> ConstraintSet {
    let pts: Vec<[f64; 2]> = (0..16)
        .map(|k| [(k % 4) as f64 / 3.0, (k / 4) as f64 / 3.0])
        .collect();
    ConstraintSet::from_fn(&pts, label_function).expect("lattice points are distinct")
}

/// Bandwidths visited for each sample size.
#[derive(Debug, Clone, PartialEq)]
pub enum Bandwidth {
    /// The same list for every `n`.
    Values(Vec<f64>),
    /// `h = scale · n^exponent`.
    PowerLaw { scale: f64, exponent: f64 },
}

impl Bandwidth {
    pub fn for_n(&self, n: usize) -> Vec<f64> {
        match self {
            Bandwidth::Values(v) => v.clone(),
            Bandwidth::PowerLaw { scale, exponent } => vec![scale * (n as f64).powf(*exponent)],
        }
    }
}

/// Parameters shared by the studies.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub density: DensityId,
    pub kernel: Kernel,
    pub n_values: Vec<usize>,
    pub bandwidth: Bandwidth,
    /// Number of spline knots.
    pub t: usize,
    pub lambda: f64,
    /// Estimators compared; `Exact` is ignored.
    pub estimators: Vec<DensityKind>,
    /// Also measure both partial derivatives in the density study.
    pub derivatives: bool,
    pub p: f64,
    pub eta: WeightProfile,
    pub beta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub patch_points: usize,
    pub scheme: Scheme,
    pub discrete: bool,
    pub graph: GraphKind,
    pub epsilon: Option<f64>,
    pub k: usize,
    pub discrete_tol: f64,
    pub discrete_max_iter: usize,
    pub seeds: Vec<u64>,
    pub mesh: usize,
    pub region: Region,
    /// Relative slack allowed by the trend flags.
    pub trend_margin: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self::from_run_config(&RunConfig::default())
    }
}

impl StudyConfig {
    pub fn from_run_config(cfg: &RunConfig) -> Self {
        Self {
            density: cfg.density,
            kernel: cfg.kernel,
            n_values: cfg.n_values.clone(),
            bandwidth: Bandwidth::Values(cfg.h_values.clone()),
            t: cfg.t,
            lambda: cfg.lambda,
            estimators: vec![DensityKind::Kde, DensityKind::Skde],
            derivatives: true,
            p: cfg.p,
            eta: cfg.eta,
            beta: cfg.beta,
            tol: cfg.tol,
            max_iter: cfg.max_iter,
            patch_points: cfg.patch_points,
            scheme: cfg.scheme,
            discrete: cfg.discrete,
            graph: cfg.graph,
            epsilon: cfg.epsilon,
            k: cfg.k,
            discrete_tol: cfg.discrete_tol,
            discrete_max_iter: cfg.discrete_max_iter,
            seeds: cfg.seeds.clone(),
            mesh: cfg.mesh,
            region: OMEGA_PRIME,
            trend_margin: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        self.region.validate()?;
        if self.n_values.is_empty()
            || self.n_values[0] == 0
            || self.n_values.windows(2).any(|w| w[0] >= w[1])
        {
            return bad("n values must be positive and strictly increasing".into());
        }
        match &self.bandwidth {
            Bandwidth::Values(v) => {
                if v.is_empty() || !(v[0] > 0.0) || v.windows(2).any(|w| !(w[0] < w[1])) {
                    return bad("bandwidths must be positive and strictly increasing".into());
                }
            }
            Bandwidth::PowerLaw { scale, exponent } => {
                if !(*scale > 0.0) || !exponent.is_finite() {
                    return bad(format!(
                        "bandwidth law {scale}·n^{exponent} is not positive"
                    ));
                }
            }
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.mesh < 2 {
            return bad(format!("mesh side must be at least 2, got {}", self.mesh));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("tol", self.tol),
            ("discrete_tol", self.discrete_tol),
        ] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.p > 1.0) || !(self.trend_margin >= 0.0) {
            return bad(format!(
                "p = {} and margin = {} out of range",
                self.p, self.trend_margin
            ));
        }
        Ok(())
    }

    fn estimators(&self) -> Vec<DensityKind> {
        self.estimators
            .iter()
            .copied()
            .filter(|e| *e != DensityKind::Exact)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_the_formula() {
        assert_eq!(label_function(0.5, 0.5), 0.0);
        assert_eq!(label_function(0.0, 0.0), 1.25);
        assert_eq!(label_function(1.0, 0.5), 1.0);
        let c = constraint_labels();
        assert_eq!(c.len(), 16);
        let (lo, hi) = c.label_range();
        assert!((lo - 5.0 / 36.0).abs() < 1e-15);
        assert_eq!(hi, 1.25);
    }

    #[test]
    fn default_study_is_valid() {
        let s = StudyConfig::default();
        s.validate().unwrap();
        assert_eq!(s.region, OMEGA_PRIME);
        let mut bad = s.clone();
        bad.n_values = vec![4096, 1024];
        assert!(bad.validate().is_err());
        bad = s.clone();
        bad.region = Region {
            lo: [0.0, 0.0],
            hi: [1.5, 1.0],
        };
        assert!(bad.validate().is_err());
        assert_eq!(
            Bandwidth::PowerLaw {
                scale: 1.0,
                exponent: -0.5
            }
            .for_n(64),
            vec![0.125]
        );
    }
}
