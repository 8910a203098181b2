use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::numerics::quadrature::integrate_composite;

/// Radial weight profile `η : [0,∞) → [0,∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightProfile {
    /// `η = 1` on `[0,1]`, zero beyond.
    Indicator,
    /// `η(r) = exp(-r²/2)`, truncated at [`super::kde::GAUSSIAN_TRUNCATION`] for graph construction.
    Gaussian,
    /// `η(r) = (1 + r)^{-decay}`; heavy tailed, no finite support.
    Algebraic { decay: f64 },
    /// `η ≡ 0`.
    Zero,
}

impl WeightProfile {
    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            WeightProfile::Indicator => {
                if r <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            WeightProfile::Gaussian => (-0.5 * r * r).exp(),
            WeightProfile::Algebraic { decay } => (1.0 + r).powf(-decay),
            WeightProfile::Zero => 0.0,
        }
    }

    /// Radius beyond which `η` is treated as zero, if any.
    pub fn support(&self) -> Option<f64> {
        match self {
            WeightProfile::Indicator => Some(1.0),
            WeightProfile::Gaussian => Some(super::kde::GAUSSIAN_TRUNCATION),
            WeightProfile::Algebraic { .. } => None,
            WeightProfile::Zero => Some(0.0),
        }
    }
}

impl fmt::Display for WeightProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightProfile::Indicator => f.write_str("indicator"),
            WeightProfile::Gaussian => f.write_str("gaussian"),
            WeightProfile::Algebraic { decay } => write!(f, "algebraic:{decay}"),
            WeightProfile::Zero => f.write_str("zero"),
        }
    }
}

impl FromStr for WeightProfile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "indicator" => Ok(WeightProfile::Indicator),
            "gaussian" => Ok(WeightProfile::Gaussian),
            "zero" => Ok(WeightProfile::Zero),
            _ => match s.strip_prefix("algebraic:").map(str::parse::<f64>) {
                Some(Ok(decay)) => Ok(WeightProfile::Algebraic { decay }),
                _ => Err(Error::InvalidArgument(format!(
                    "unknown weight profile `{s}`"
                ))),
            },
        }
    }
}

/// `∫_{S^{d-1}} |ω·e₁|^p dω`.
fn angular_factor(p: f64, d: usize) -> f64 {
    let d = d as f64;
    2.0 * PI.powf(0.5 * (d - 1.0)) * (ln_gamma(0.5 * (p + 1.0)) - ln_gamma(0.5 * (p + d))).exp()
}

const MAX_SHELLS: usize = 64;

/// `∫_{ℝ^d} η(|x|) |x·e₁|^p dx`, split into an angular factor (closed form) and a radial
/// integral over dyadic shells. Shells are added until their contribution is negligible; a
/// tail that never settles is reported as divergent.
pub fn sigma_eta(eta: WeightProfile, p: f64, d: usize) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "p must be at least 1, got {p}"
        )));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let power = p + d as f64 - 1.0;
    let radial = |r: f64| eta.eval(r) * r.powf(power);
    let exact_support = match eta {
        WeightProfile::Indicator | WeightProfile::Zero => eta.support(),
        _ => None,
    };
    let mut total = match exact_support {
        Some(m) if m <= 1.0 => integrate_composite(radial, 0.0, m, 1, 40),
        _ => integrate_composite(radial, 0.0, 1.0, 4, 40),
    };
    if let Some(m) = exact_support {
        let mut lo = 1.0f64;
        while lo < m {
            let hi = (2.0 * lo).min(m);
            total += integrate_composite(radial, lo, hi, 4, 40);
            lo = hi;
        }
        return Ok(total * angular_factor(p, d));
    }
    let mut lo = 1.0f64;
    let mut settled = 0;
    for _ in 0..MAX_SHELLS {
        let shell = integrate_composite(radial, lo, 2.0 * lo, 4, 40);
        total += shell;
        lo *= 2.0;
        if shell.abs() <= 1e-13 * total.abs() {
            settled += 1;
            if settled >= 3 {
                return Ok(total * angular_factor(p, d));
            }
        } else {
            settled = 0;
        }
    }
    Err(Error::Divergent { radius: lo })
}
