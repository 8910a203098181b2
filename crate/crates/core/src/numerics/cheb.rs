//! Chebyshev–Gauss–Lobatto grids and pseudo-spectral differentiation.
//!
//! Two-dimensional fields are stored row-major with `x` varying fastest:
//! the value at `(x_i, y_j)` lives at index `j * nx + i`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Gauss–Lobatto points `cos(i pi / D)`, `i = 0..=D`, mapped onto `[a, b]`.
///
/// Node `0` is `b` and node `D` is `a`, both exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebGrid1D {
    order: usize,
    nodes: Vec<f64>,
    a: f64,
    b: f64,
}

/// Builds the Chebyshev grid of `order` intervals on `interval`.
pub fn chebyshev_nodes(order: usize, interval: (f64, f64)) -> Result<ChebGrid1D> {
    ChebGrid1D::new(order, interval)
}

impl ChebGrid1D {
    pub fn new(order: usize, (a, b): (f64, f64)) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidOrder(order));
        }
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidInterval { a, b });
        }
        let d = order as f64;
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let nodes = (0..=order)
            .map(|i| {
                if i == 0 {
                    b
                } else if i == order {
                    a
                } else {
                    // sin form keeps the reference nodes exactly antisymmetric
                    let s = (PI * (d - 2.0 * i as f64) / (2.0 * d)).sin();
                    mid + half * s
                }
            })
            .collect();
        Ok(Self { order, nodes, a, b })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.order + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.a && x <= self.b
    }

    /// Barycentric weights for Lobatto nodes: `(-1)^i`, halved at the ends.
    pub fn barycentric_weights(&self) -> Vec<f64> {
        (0..=self.order)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                if i == 0 || i == self.order {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect()
    }

    /// Lagrange basis values at `x`; exact unit vector when `x` is a node.
    pub fn interpolation_row(&self, x: f64) -> Vec<f64> {
        let mut row = vec![0.0; self.len()];
        if let Some(k) = self.nodes.iter().position(|&t| t == x) {
            row[k] = 1.0;
            return row;
        }
        let w = self.barycentric_weights();
        let mut denom = 0.0;
        for (k, (&t, &wk)) in self.nodes.iter().zip(&w).enumerate() {
            let c = wk / (x - t);
            row[k] = c;
            denom += c;
        }
        for r in &mut row {
            *r /= denom;
        }
        row
    }
}

/// Dense square operator acting on nodal values.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffOperator {
    size: usize,
    entries: Vec<f64>,
}

impl DiffOperator {
    pub fn from_entries(size: usize, entries: Vec<f64>) -> Self {
        assert_eq!(entries.len(), size * size);
        Self { size, entries }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.size..(i + 1) * self.size]
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.size);
        (0..self.size)
            .map(|i| self.row(i).iter().zip(f).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Largest absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.size)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// First-derivative collocation matrix on `grid`.
///
/// Off-diagonal entries use the closed form `(c_i / c_j) (-1)^(i+j) / (x_i - x_j)`
/// with node differences evaluated through a product of sines; the diagonal is
/// the negative off-diagonal row sum.
pub fn chebyshev_diff_matrix(grid: &ChebGrid1D) -> DiffOperator {
    let d = grid.order;
    let n = d + 1;
    let df = d as f64;
    let (a, b) = grid.interval();
    let scale = 2.0 / (b - a);
    let c = |i: usize| if i == 0 || i == d { 2.0 } else { 1.0 };
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            // cos(i pi/D) - cos(j pi/D) = 2 sin((i+j) pi/2D) sin((j-i) pi/2D)
            let diff = 2.0
                * ((i + j) as f64 * PI / (2.0 * df)).sin()
                * ((j as f64 - i as f64) * PI / (2.0 * df)).sin();
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            let v = sign * c(i) / c(j) / diff * scale;
            entries[i * n + j] = v;
            row_sum += v;
        }
        entries[i * n + i] = -row_sum;
    }
    DiffOperator { size: n, entries }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Partial derivative on a tensor grid, held as its one-dimensional factor.
///
/// Equivalent to `I_y ⊗ D_x` (axis x) or `D_y ⊗ I_x` (axis y) under the
/// x-fastest flattening.
#[derive(Debug, Clone)]
pub struct TensorDiff {
    factor: DiffOperator,
    axis: Axis,
    nx: usize,
    ny: usize,
}

impl TensorDiff {
    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn factor(&self) -> &DiffOperator {
        &self.factor
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn size(&self) -> usize {
        self.nx * self.ny
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.apply_into(f, &mut out);
        out
    }

    pub fn apply_into(&self, f: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        assert_eq!(f.len(), nx * ny);
        assert_eq!(out.len(), nx * ny);
        match self.axis {
            Axis::X => {
                for j in 0..ny {
                    let line = &f[j * nx..(j + 1) * nx];
                    for i in 0..nx {
                        out[j * nx + i] = self
                            .factor
                            .row(i)
                            .iter()
                            .zip(line)
                            .map(|(a, b)| a * b)
                            .sum();
                    }
                }
            }
            Axis::Y => {
                out.iter_mut().for_each(|v| *v = 0.0);
                for j in 0..ny {
                    for (l, &d) in self.factor.row(j).iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        let src = &f[l * nx..(l + 1) * nx];
                        let dst = &mut out[j * nx..(j + 1) * nx];
                        for (o, s) in dst.iter_mut().zip(src) {
                            *o += d * s;
                        }
                    }
                }
            }
        }
    }

    /// Entry `(row, col)` of the full Kronecker operator.
    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        let nx = self.nx;
        let (ri, rj) = (row % nx, row / nx);
        let (ci, cj) = (col % nx, col / nx);
        match self.axis {
            Axis::X if rj == cj => self.factor.get(ri, ci),
            Axis::Y if ri == ci => self.factor.get(rj, cj),
            _ => 0.0,
        }
    }

    /// Materialises the Kronecker product; intended for small grids and tests.
    pub fn to_dense(&self) -> DiffOperator {
        let m = self.size();
        let mut entries = vec![0.0; m * m];
        for r in 0..m {
            for c in 0..m {
                entries[r * m + c] = self.entry(r, c);
            }
        }
        DiffOperator::from_entries(m, entries)
    }
}

/// `(∂/∂x, ∂/∂y)` on the tensor grid `grid_x × grid_y`.
pub fn tensor_diff_ops(grid_x: &ChebGrid1D, grid_y: &ChebGrid1D) -> (TensorDiff, TensorDiff) {
    let (nx, ny) = (grid_x.len(), grid_y.len());
    (
        TensorDiff {
            factor: chebyshev_diff_matrix(grid_x),
            axis: Axis::X,
            nx,
            ny,
        },
        TensorDiff {
            factor: chebyshev_diff_matrix(grid_y),
            axis: Axis::Y,
            nx,
            ny,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_small_orders() {
        let g = chebyshev_nodes(2, (-1.0, 1.0)).unwrap();
        assert_eq!(g.nodes(), &[1.0, 0.0, -1.0]);
        let g = chebyshev_nodes(2, (0.0, 1.0)).unwrap();
        assert_eq!(g.nodes(), &[1.0, 0.5, 0.0]);
        let g = chebyshev_nodes(8, (-1.0, 1.0)).unwrap();
        assert!((g.nodes()[1] - (PI / 8.0).cos()).abs() < 1e-15);
        assert!((g.nodes()[1] - 0.923_879_532_511_286_7).abs() < 1e-12);
    }

    #[test]
    fn node_errors() {
        assert!(matches!(
            chebyshev_nodes(1, (0.0, 1.0)),
            Err(Error::InvalidOrder(1))
        ));
        assert!(matches!(
            chebyshev_nodes(4, (1.0, 1.0)),
            Err(Error::InvalidInterval { .. })
        ));
        assert!(chebyshev_nodes(4, (2.0, 1.0)).is_err());
    }

    #[test]
    fn nodes_monotone_and_symmetric() {
        for order in [2, 3, 7, 16, 33] {
            let g = chebyshev_nodes(order, (0.25, 2.0)).unwrap();
            let x = g.nodes();
            assert_eq!(x[0], 2.0);
            assert_eq!(x[order], 0.25);
            assert!(x.windows(2).all(|w| w[0] > w[1]));
            let mid = 1.125;
            for i in 0..=order {
                assert!(((x[i] - mid) + (x[order - i] - mid)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn derivative_of_quadratic_and_linear() {
        let g = chebyshev_nodes(8, (-1.0, 1.0)).unwrap();
        let d = chebyshev_diff_matrix(&g);
        let f: Vec<f64> = g.nodes().iter().map(|x| x * x).collect();
        for (df, x) in d.apply(&f).iter().zip(g.nodes()) {
            assert!((df - 2.0 * x).abs() < 1e-12);
        }
        let g = chebyshev_nodes(6, (0.0, 1.0)).unwrap();
        let d = chebyshev_diff_matrix(&g);
        for v in d.apply(g.nodes()) {
            assert!((v - 1.0).abs() < 1e-12);
        }
        for v in d.apply(&[3.5; 7]) {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn rows_sum_to_zero() {
        for order in [2, 10, 40, 99] {
            let d = chebyshev_diff_matrix(&chebyshev_nodes(order, (0.0, 1.0 / 3.0)).unwrap());
            for i in 0..d.size() {
                assert!(d.row(i).iter().sum::<f64>().abs() < 1e-10);
            }
        }
    }

    #[test]
    fn polynomial_exactness_high_order() {
        let order = 24;
        let g = chebyshev_nodes(order, (-1.0, 1.0)).unwrap();
        let d = chebyshev_diff_matrix(&g);
        let tol = 1e-10 * (order * order) as f64;
        for deg in 0..=order {
            let f: Vec<f64> = g.nodes().iter().map(|x| x.powi(deg as i32)).collect();
            let df = d.apply(&f);
            for (v, x) in df.iter().zip(g.nodes()) {
                let exact = if deg == 0 {
                    0.0
                } else {
                    deg as f64 * x.powi(deg as i32 - 1)
                };
                assert!((v - exact).abs() <= tol * exact.abs().max(1.0), "deg {deg}");
            }
        }
    }

    #[test]
    fn tensor_ops_linear_and_bilinear() {
        let gx = chebyshev_nodes(8, (0.0, 1.0)).unwrap();
        let gy = chebyshev_nodes(8, (-1.0, 2.0)).unwrap();
        let (dx, dy) = tensor_diff_ops(&gx, &gy);
        let nx = gx.len();
        let mut lin = Vec::new();
        let mut bil = Vec::new();
        for &y in gy.nodes() {
            for &x in gx.nodes() {
                lin.push(x + 2.0 * y);
                bil.push(x * y);
            }
        }
        assert!(dx.apply(&lin).iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(dy.apply(&lin).iter().all(|v| (v - 2.0).abs() < 1e-12));
        let bx = dx.apply(&bil);
        for (j, &y) in gy.nodes().iter().enumerate() {
            for i in 0..nx {
                assert!((bx[j * nx + i] - y).abs() < 1e-12);
            }
        }
        assert!(dx.apply(&vec![1.0; 81]).iter().all(|v| v.abs() < 1e-12));
        assert!(dy.apply(&vec![1.0; 81]).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn dense_kron_matches_structured_apply() {
        let gx = chebyshev_nodes(3, (0.0, 1.0)).unwrap();
        let gy = chebyshev_nodes(4, (0.0, 2.0)).unwrap();
        let (dx, dy) = tensor_diff_ops(&gx, &gy);
        let f: Vec<f64> = (0..20).map(|k| (k as f64 * 0.37).sin()).collect();
        for op in [&dx, &dy] {
            let dense = op.to_dense();
            let a = dense.apply(&f);
            let b = op.apply(&f);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interpolation_row_exact_at_nodes_and_on_polynomials() {
        let g = chebyshev_nodes(10, (0.0, 1.0)).unwrap();
        let row = g.interpolation_row(g.nodes()[3]);
        assert_eq!(row[3], 1.0);
        assert_eq!(row.iter().filter(|&&v| v != 0.0).count(), 1);
        let f: Vec<f64> = g.nodes().iter().map(|x| x.powi(7) - x).collect();
        for x in [0.013, 0.5, 0.77] {
            let v: f64 = g
                .interpolation_row(x)
                .iter()
                .zip(&f)
                .map(|(a, b)| a * b)
                .sum();
            assert!((v - (x.powi(7) - x)).abs() < 1e-13);
        }
    }
}
