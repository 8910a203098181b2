use crate::error::{Error, Result};

/// Axis-aligned evaluation rectangle inside `[0,1]²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

/// `[0.01, 0.99]²`, which keeps boundary bias of the estimators out of the error.
pub const OMEGA_PRIME: Region = Region {
    lo: [0.01, 0.01],
    hi: [0.99, 0.99],
};

impl Region {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        let r = Self { lo, hi };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        for k in 0..2 {
            if !(0.0 <= self.lo[k] && self.lo[k] < self.hi[k] && self.hi[k] <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "region [{:?}, {:?}] is not a non-empty subset of the unit square",
                    self.lo, self.hi
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (self.lo[0]..=self.hi[0]).contains(&p[0]) && (self.lo[1]..=self.hi[1]).contains(&p[1])
    }
}

/// `D` equispaced nodes `i / (D − 1)`.
pub fn mesh_axis(d: usize) -> Vec<f64> {
    assert!(d >= 2, "a mesh needs at least two nodes per side");
    (0..d).map(|i| i as f64 / (d - 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorPair {
    pub l2: f64,
    pub linf: f64,
}

/// `L² = sqrt(D⁻² Σ_{Ω′} |a − b|²)` and `L∞ = max_{Ω′} |a − b|` over the `axis × axis` mesh (x-fastest).
pub fn error_metrics(a: &[f64], b: &[f64], axis: &[f64], region: &Region) -> Result<ErrorPair> {
    let d = axis.len();
    if a.len() != d * d || b.len() != d * d {
        return Err(Error::Shape(format!(
            "fields of {} and {} values on a {d}×{d} mesh",
            a.len(),
            b.len()
        )));
    }
    let (mut sum, mut linf) = (0.0f64, 0.0f64);
    for (j, &y) in axis.iter().enumerate() {
        for (i, &x) in axis.iter().enumerate() {
            if region.contains([x, y]) {
                let e = (a[j * d + i] - b[j * d + i]).abs();
                sum += e * e;
                linf = linf.max(e);
            }
        }
    }
    Ok(ErrorPair {
        l2: (sum / (d * d) as f64).sqrt(),
        linf,
    })
}

/// Pointwise version for scattered samples: `L²` is normalised by the total point count.
pub fn scattered_error(
    points: &[[f64; 2]],
    a: &[f64],
    b: &[f64],
    region: &Region,
) -> Result<ErrorPair> {
    if a.len() != points.len() || b.len() != points.len() {
        return Err(Error::Shape(format!(
            "{} points, {} and {} values",
            points.len(),
            a.len(),
            b.len()
        )));
    }
    let (mut sum, mut linf) = (0.0f64, 0.0f64);
    for ((p, x), y) in points.iter().zip(a).zip(b) {
        if region.contains(*p) {
            let e = (x - y).abs();
            sum += e * e;
            linf = linf.max(e);
        }
    }
    Ok(ErrorPair {
        l2: (sum / points.len().max(1) as f64).sqrt(),
        linf,
    })
}

/// Median; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Whether every step satisfies `next ≤ (1 + margin) · previous`.
pub fn non_increasing(values: &[f64], margin: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] * (1.0 + margin))
}
