use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::reference::ReferenceDensity;
use crate::error::{Error, Result};

/// Grid resolution (nodes per side) of the tabulated CDF.
pub const SAMPLING_GRID: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub points: Vec<[f64; 2]>,
    pub seed: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Piecewise-uniform approximation of a density on `[0,1]²` for inverse-transform sampling.
///
/// The density is tabulated on a uniform node grid; each cell carries the trapezoidal
/// mass of its four corners. A draw picks a column from the marginal CDF in `x`, then a
/// row from the conditional CDF of that column, and places the point uniformly inside
/// the chosen cell (linear interpolation of the CDF).
#[derive(Debug, Clone)]
pub struct GridSampler {
    cells: usize,
    marginal: Vec<f64>,
    conditional: Vec<f64>,
}

impl GridSampler {
    pub fn new(density: impl Fn(f64, f64) -> f64, nodes_per_side: usize) -> Self {
        assert!(nodes_per_side >= 2);
        let cells = nodes_per_side - 1;
        let h = 1.0 / cells as f64;
        let vals: Vec<f64> = (0..nodes_per_side * nodes_per_side)
            .map(|k| {
                let (i, j) = (k % nodes_per_side, k / nodes_per_side);
                density(i as f64 * h, j as f64 * h).max(0.0)
            })
            .collect();
        let at = |i: usize, j: usize| vals[j * nodes_per_side + i];
        let mut conditional = vec![0.0; cells * cells];
        let mut marginal = vec![0.0; cells];
        let mut running = 0.0;
        for i in 0..cells {
            let mut col = 0.0;
            for j in 0..cells {
                let m = 0.25 * (at(i, j) + at(i + 1, j) + at(i, j + 1) + at(i + 1, j + 1));
                col += m;
                conditional[i * cells + j] = col;
            }
            running += col;
            marginal[i] = running;
        }
        Self {
            cells,
            marginal,
            conditional,
        }
    }

    fn pick(cdf: &[f64], u: f64) -> (usize, f64) {
        let total = *cdf.last().unwrap();
        let target = u * total;
        let k = cdf.partition_point(|&c| c <= target).min(cdf.len() - 1);
        let lo = if k == 0 { 0.0 } else { cdf[k - 1] };
        let w = cdf[k] - lo;
        let frac = if w > 0.0 {
            ((target - lo) / w).clamp(0.0, 1.0)
        } else {
            0.5
        };
        (k, frac)
    }

    pub fn draw(&self, rng: &mut impl Rng) -> [f64; 2] {
        let h = 1.0 / self.cells as f64;
        let (i, fx) = Self::pick(&self.marginal, rng.random::<f64>());
        let col = &self.conditional[i * self.cells..(i + 1) * self.cells];
        let (j, fy) = Self::pick(col, rng.random::<f64>());
        [
            ((i as f64 + fx) * h).clamp(0.0, 1.0),
            ((j as f64 + fy) * h).clamp(0.0, 1.0),
        ]
    }
}

/// `n` i.i.d. draws from `density`, reproducible per `seed`.
pub fn sample_density(density: &ReferenceDensity, n: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let sampler = GridSampler::new(|x, y| density.value(x, y), SAMPLING_GRID);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n).map(|_| sampler.draw(&mut rng)).collect();
    Ok(SampleSet { points, seed })
}
