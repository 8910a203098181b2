use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::dense::gemm_acc;

/// Radial kernels on ℝ² integrating to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kernel {
    Gaussian,
    UniformBall,
    Epanechnikov,
}

/// Radius (in bandwidth units) beyond which the Gaussian is dropped from direct sums.
pub const GAUSSIAN_TRUNCATION: f64 = 5.0;

impl Kernel {
    /// Radius of the summation support, in units of the bandwidth.
    pub fn support(&self) -> f64 {
        match self {
            Kernel::Gaussian => GAUSSIAN_TRUNCATION,
            Kernel::UniformBall | Kernel::Epanechnikov => 1.0,
        }
    }

    /// Whether the kernel vanishes identically outside [`Kernel::support`].
    pub fn is_compact(&self) -> bool {
        !matches!(self, Kernel::Gaussian)
    }

    /// `K(x)` as a function of `r = |x|`.
    #[inline]
    pub fn profile(&self, r: f64) -> f64 {
        match self {
            Kernel::Gaussian => (-0.5 * r * r).exp() / (2.0 * PI),
            Kernel::UniformBall => {
                if r <= 1.0 {
                    1.0 / PI
                } else {
                    0.0
                }
            }
            Kernel::Epanechnikov => {
                if r <= 1.0 {
                    2.0 / PI * (1.0 - r * r)
                } else {
                    0.0
                }
            }
        }
    }

    /// `K'(r) / r`, so that `∇K(x) = x K'(r)/r`; zero for the uniform kernel.
    #[inline]
    fn radial_slope_over_r(&self, r: f64) -> f64 {
        match self {
            Kernel::Gaussian => -(-0.5 * r * r).exp() / (2.0 * PI),
            Kernel::UniformBall => 0.0,
            Kernel::Epanechnikov => {
                if r <= 1.0 {
                    -4.0 / PI
                } else {
                    0.0
                }
            }
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Kernel::Gaussian => "gaussian",
            Kernel::UniformBall => "uniform-ball",
            Kernel::Epanechnikov => "epanechnikov",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kernel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Kernel::Gaussian),
            "uniform" | "uniform-ball" => Ok(Kernel::UniformBall),
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            other => Err(Error::InvalidArgument(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Uniform bucket grid over a point set, used for fixed-radius neighbour queries.
#[derive(Debug, Clone)]
pub struct CellIndex {
    origin: [f64; 2],
    cell: f64,
    dims: [usize; 2],
    starts: Vec<usize>,
    order: Vec<usize>,
}

impl CellIndex {
    pub fn new(points: &[[f64; 2]], cell: f64) -> Self {
        assert!(cell > 0.0);
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        if points.is_empty() {
            lo = [0.0; 2];
            hi = [0.0; 2];
        }
        let dims = [0, 1].map(|k| (((hi[k] - lo[k]) / cell).floor() as usize + 1).min(4096));
        let cell = cell.max((hi[0] - lo[0]).max(hi[1] - lo[1]) / 4095.0);
        let key = |p: &[f64; 2]| {
            let cx = (((p[0] - lo[0]) / cell) as usize).min(dims[0] - 1);
            let cy = (((p[1] - lo[1]) / cell) as usize).min(dims[1] - 1);
            cy * dims[0] + cx
        };
        let ncell = dims[0] * dims[1];
        let mut counts = vec![0usize; ncell + 1];
        for p in points {
            counts[key(p) + 1] += 1;
        }
        for k in 0..ncell {
            counts[k + 1] += counts[k];
        }
        let mut fill = counts.clone();
        let mut order = vec![0; points.len()];
        for (i, p) in points.iter().enumerate() {
            let k = key(p);
            order[fill[k]] = i;
            fill[k] += 1;
        }
        Self {
            origin: lo,
            cell,
            dims,
            starts: counts,
            order,
        }
    }

    /// Calls `f(index)` for every point whose cell intersects the square of half-width `radius` around `q`.
    pub fn for_each_near(&self, q: [f64; 2], radius: f64, mut f: impl FnMut(usize)) {
        let range = |k: usize| {
            let lo = ((q[k] - radius - self.origin[k]) / self.cell).floor();
            let hi = ((q[k] + radius - self.origin[k]) / self.cell).floor();
            let max = (self.dims[k] - 1) as f64;
            if hi < 0.0 || lo > max {
                None
            } else {
                Some((lo.max(0.0) as usize, hi.min(max) as usize))
            }
        };
        let (Some((x0, x1)), Some((y0, y1))) = (range(0), range(1)) else {
            return;
        };
        for cy in y0..=y1 {
            let row = cy * self.dims[0];
            for k in &self.order[self.starts[row + x0]..self.starts[row + x1 + 1]] {
                f(*k);
            }
        }
    }
}

/// Values and first partials of a field on a tensor grid, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorValues {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

/// Kernel density estimate `ρ(x) = (1/n) Σ K_h(x - x_i)` with `K_h(x) = h⁻² K(x/h)`.
#[derive(Debug, Clone)]
pub struct Kde {
    samples: Vec<[f64; 2]>,
    h: f64,
    kernel: Kernel,
    index: CellIndex,
}

impl Kde {
    pub fn new(samples: &[[f64; 2]], h: f64, kernel: Kernel) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidBandwidth(h));
        }
        if samples.is_empty() {
            return Err(Error::EmptySample);
        }
        let index = CellIndex::new(samples, kernel.support() * h);
        Ok(Self {
            samples: samples.to_vec(),
            h,
            kernel,
            index,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    fn accumulate(&self, q: [f64; 2]) -> (f64, [f64; 2]) {
        let h = self.h;
        let radius = self.kernel.support() * h;
        let r2max = radius * radius;
        let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
        self.index.for_each_near(q, radius, |i| {
            let s = self.samples[i];
            let (dx, dy) = ((q[0] - s[0]) / h, (q[1] - s[1]) / h);
            let d2 = dx * dx + dy * dy;
            if d2 * h * h > r2max {
                return;
            }
            let r = d2.sqrt();
            v += self.kernel.profile(r);
            let g = self.kernel.radial_slope_over_r(r);
            gx += g * dx;
            gy += g * dy;
        });
        let n = self.samples.len() as f64;
        let s0 = 1.0 / (n * h * h);
        let s1 = s0 / h;
        (v * s0, [gx * s1, gy * s1])
    }

    pub fn value_at(&self, q: [f64; 2]) -> f64 {
        self.accumulate(q).0
    }

    pub fn gradient_at(&self, q: [f64; 2]) -> [f64; 2] {
        self.accumulate(q).1
    }

    /// Direct summation at arbitrary query points.
    pub fn evaluate(&self, query: &[[f64; 2]]) -> Vec<f64> {
        query.par_iter().map(|&q| self.value_at(q)).collect()
    }

    pub fn gradient(&self, query: &[[f64; 2]]) -> Vec<[f64; 2]> {
        query.par_iter().map(|&q| self.gradient_at(q)).collect()
    }

    /// Values and gradient on `xs × ys`.
    ///
    /// The Gaussian factorises over coordinates, so the double sum becomes a pair of
    /// matrix products (no truncation on this path). Compact kernels use direct sums.
    pub fn on_tensor_grid(&self, xs: &[f64], ys: &[f64]) -> TensorValues {
        self.tensor_grid(xs, ys, true)
    }

    /// Values only on `xs × ys`, x-fastest.
    pub fn values_on_tensor_grid(&self, xs: &[f64], ys: &[f64]) -> Vec<f64> {
        self.tensor_grid(xs, ys, false).values
    }

    fn tensor_grid(&self, xs: &[f64], ys: &[f64], derivatives: bool) -> TensorValues {
        let (nx, ny) = (xs.len(), ys.len());
        if self.kernel != Kernel::Gaussian {
            let pts: Vec<[f64; 2]> = ys
                .iter()
                .flat_map(|&y| xs.iter().map(move |&x| [x, y]))
                .collect();
            let acc: Vec<(f64, [f64; 2])> = pts.par_iter().map(|&q| self.accumulate(q)).collect();
            return TensorValues {
                nx,
                ny,
                values: acc.iter().map(|a| a.0).collect(),
                dx: acc.iter().map(|a| a.1[0]).collect(),
                dy: acc.iter().map(|a| a.1[1]).collect(),
            };
        }
        let h = self.h;
        let norm = 1.0 / ((2.0 * PI).sqrt() * h);
        let g = |t: f64| norm * (-0.5 * (t / h).powi(2)).exp();
        let mut values = vec![0.0; nx * ny];
        let len = if derivatives { nx * ny } else { 0 };
        let mut dx = vec![0.0; len];
        let mut dy = vec![0.0; len];
        const CHUNK: usize = 4096;
        for chunk in self.samples.chunks(CHUNK) {
            let c = chunk.len();
            // gy: ny × c, gxt: c × nx
            let mut gy = vec![0.0; ny * c];
            let mut gyd = if derivatives {
                vec![0.0; ny * c]
            } else {
                Vec::new()
            };
            for (j, &y) in ys.iter().enumerate() {
                for (s, p) in chunk.iter().enumerate() {
                    let t = y - p[1];
                    let v = g(t);
                    gy[j * c + s] = v;
                    if derivatives {
                        gyd[j * c + s] = -t / (h * h) * v;
                    }
                }
            }
            let mut gxt = vec![0.0; c * nx];
            let mut gxtd = if derivatives {
                vec![0.0; c * nx]
            } else {
                Vec::new()
            };
            for (s, p) in chunk.iter().enumerate() {
                for (i, &x) in xs.iter().enumerate() {
                    let t = x - p[0];
                    let v = g(t);
                    gxt[s * nx + i] = v;
                    if derivatives {
                        gxtd[s * nx + i] = -t / (h * h) * v;
                    }
                }
            }
            gemm_acc(ny, c, nx, 1.0, &gy, c, &gxt, nx, 1.0, &mut values, nx);
            if derivatives {
                gemm_acc(ny, c, nx, 1.0, &gy, c, &gxtd, nx, 1.0, &mut dx, nx);
                gemm_acc(ny, c, nx, 1.0, &gyd, c, &gxt, nx, 1.0, &mut dy, nx);
            }
        }
        let inv_n = 1.0 / self.samples.len() as f64;
        for buf in [&mut values, &mut dx, &mut dy] {
            buf.iter_mut().for_each(|v| *v *= inv_n);
        }
        TensorValues {
            nx,
            ny,
            values,
            dx,
            dy,
        }
    }
}

/// Evaluates the KDE of `samples` at `query` points.
pub fn kde_evaluate(
    samples: &[[f64; 2]],
    h: f64,
    kernel: Kernel,
    query: &[[f64; 2]],
) -> Result<Vec<f64>> {
    Ok(Kde::new(samples, h, kernel)?.evaluate(query))
}

/// Bandwidth `n^{-1/6}` used when none is given.
pub fn default_bandwidth(n: usize) -> f64 {
    (n as f64).powf(-1.0 / 6.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::quadrature::integrate_composite;

    #[test]
    fn kernels_integrate_to_one() {
        for k in [Kernel::Gaussian, Kernel::UniformBall, Kernel::Epanechnikov] {
            let r = if k.is_compact() { 1.0 } else { 12.0 };
            let panels = if k.is_compact() { 1 } else { 24 };
            let mass = integrate_composite(|r| 2.0 * PI * r * k.profile(r), 0.0, r, panels, 20);
            assert!((mass - 1.0).abs() < 1e-6, "{k}");
        }
    }

    #[test]
    fn single_sample_peak() {
        let h = 0.07;
        let v = kde_evaluate(&[[0.5, 0.5]], h, Kernel::Gaussian, &[[0.5, 0.5]]).unwrap();
        assert!((v[0] - 1.0 / (2.0 * PI * h * h)).abs() < 1e-10);
    }

    #[test]
    fn compact_kernel_far_query_is_zero() {
        let s = [[0.1, 0.1], [0.2, 0.15], [0.3, 0.3]];
        for k in [Kernel::UniformBall, Kernel::Epanechnikov] {
            let v = kde_evaluate(&s, 0.05, k, &[[0.9, 0.9], [5.0, -3.0]]).unwrap();
            assert_eq!(v, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn invalid_bandwidth() {
        assert!(matches!(
            kde_evaluate(&[[0.0, 0.0]], 0.0, Kernel::Gaussian, &[]),
            Err(Error::InvalidBandwidth(_))
        ));
        assert!(Kde::new(&[[0.0, 0.0]], -1.0, Kernel::Epanechnikov).is_err());
    }

    #[test]
    fn tensor_path_matches_direct_sum() {
        let samples: Vec<[f64; 2]> = (0..300)
            .map(|i| {
                let t = i as f64;
                [(t * 0.618).fract(), (t * 0.414).fract()]
            })
            .collect();
        let xs = [0.05, 0.3, 0.77];
        let ys = [0.5, 0.91];
        for kernel in [Kernel::Gaussian, Kernel::Epanechnikov] {
            let kde = Kde::new(&samples, 0.08, kernel).unwrap();
            let t = kde.on_tensor_grid(&xs, &ys);
            for (j, &y) in ys.iter().enumerate() {
                for (i, &x) in xs.iter().enumerate() {
                    let k = j * xs.len() + i;
                    let (v, g) = kde.accumulate([x, y]);
                    let scale = v.abs().max(1.0);
                    assert!((t.values[k] - v).abs() < 1e-5 * scale);
                    assert!((t.dx[k] - g[0]).abs() < 1e-4 * scale / 0.08);
                    assert!((t.dy[k] - g[1]).abs() < 1e-4 * scale / 0.08);
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let samples: Vec<[f64; 2]> = (0..50)
            .map(|i| [(i as f64 * 0.37).fract(), (i as f64 * 0.73).fract()])
            .collect();
        let kde = Kde::new(&samples, 0.2, Kernel::Gaussian).unwrap();
        let q = [0.4, 0.6];
        let e = 1e-6;
        let g = kde.gradient_at(q);
        let fx = (kde.value_at([q[0] + e, q[1]]) - kde.value_at([q[0] - e, q[1]])) / (2.0 * e);
        let fy = (kde.value_at([q[0], q[1] + e]) - kde.value_at([q[0], q[1] - e])) / (2.0 * e);
        assert!((g[0] - fx).abs() < 1e-5 && (g[1] - fy).abs() < 1e-5);
    }

    #[test]
    fn cell_index_finds_all_neighbours() {
        let pts: Vec<[f64; 2]> = (0..400)
            .map(|i| [(i as f64 * 0.1234).fract(), (i as f64 * 0.5678).fract()])
            .collect();
        let idx = CellIndex::new(&pts, 0.1);
        let q = [0.5, 0.5];
        let mut found = Vec::new();
        idx.for_each_near(q, 0.1, |i| found.push(i));
        for (i, p) in pts.iter().enumerate() {
            if (p[0] - q[0]).abs() <= 0.1 && (p[1] - q[1]).abs() <= 0.1 {
                assert!(found.contains(&i));
            }
        }
    }
}
