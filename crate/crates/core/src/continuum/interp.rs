use super::patches::PatchedDomain;
use crate::error::{Error, Result};
use crate::numerics::dense::gemm_acc;
use crate::numerics::ChebGrid1D;

/// Nodal values of one patch.
#[derive(Debug, Clone)]
pub struct PatchValues {
    pub grid_x: ChebGrid1D,
    pub grid_y: ChebGrid1D,
    /// x-fastest.
    pub values: Vec<f64>,
}

/// A piecewise-polynomial field on a patched domain, evaluable anywhere in `[0,1]²`.
#[derive(Debug, Clone)]
pub struct ContinuumField {
    per_side: usize,
    patches: Vec<PatchValues>,
}

impl ContinuumField {
    /// Scatters global node values onto every patch.
    pub fn from_nodes(domain: &PatchedDomain, values: &[f64]) -> Result<Self> {
        if values.len() != domain.node_count() {
            return Err(Error::Shape(format!(
                "{} values for {} nodes",
                values.len(),
                domain.node_count()
            )));
        }
        let patches = domain
            .patches()
            .iter()
            .enumerate()
            .map(|(pid, p)| PatchValues {
                grid_x: p.grid_x.clone(),
                grid_y: p.grid_y.clone(),
                values: domain.gather(pid, values),
            })
            .collect();
        Ok(Self {
            per_side: domain.per_side(),
            patches,
        })
    }

    pub fn from_fn(domain: &PatchedDomain, f: impl Fn(f64, f64) -> f64) -> Self {
        let values: Vec<f64> = domain
            .nodes()
            .iter()
            .map(|n| f(n.point[0], n.point[1]))
            .collect();
        Self::from_nodes(domain, &values).expect("one value per node")
    }

    pub fn per_side(&self) -> usize {
        self.per_side
    }

    pub fn patches(&self) -> &[PatchValues] {
        &self.patches
    }

    /// Largest gap between neighbouring collocation nodes.
    pub fn resolution(&self) -> f64 {
        self.patches
            .iter()
            .flat_map(|p| [p.grid_x.nodes(), p.grid_y.nodes()])
            .flat_map(|n| n.windows(2).map(|w| (w[0] - w[1]).abs()))
            .fold(0.0, f64::max)
    }

    fn cell(&self, t: f64) -> usize {
        let k = self.per_side;
        ((t.clamp(0.0, 1.0) * k as f64).floor() as usize).min(k - 1)
    }

    fn check(x: f64, y: f64) -> Result<()> {
        let inside = |t: f64| (-1e-12..=1.0 + 1e-12).contains(&t);
        if inside(x) && inside(y) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { x, y })
        }
    }

    pub fn value(&self, x: f64, y: f64) -> Result<f64> {
        Self::check(x, y)?;
        let p = &self.patches[self.cell(y) * self.per_side + self.cell(x)];
        let n = p.grid_x.len();
        let rx = p.grid_x.interpolation_row(x.clamp(0.0, 1.0));
        let ry = p.grid_y.interpolation_row(y.clamp(0.0, 1.0));
        let mut s = 0.0;
        for (j, &wy) in ry.iter().enumerate() {
            if wy == 0.0 {
                continue;
            }
            let line = &p.values[j * n..(j + 1) * n];
            s += wy * rx.iter().zip(line).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(s)
    }

    /// Values on the tensor mesh `xs × ys`, x-fastest.
    pub fn on_tensor_grid(&self, xs: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
        for &x in xs {
            Self::check(x, 0.0)?;
        }
        for &y in ys {
            Self::check(0.0, y)?;
        }
        let k = self.per_side;
        let (nqx, nqy) = (xs.len(), ys.len());
        let mut out = vec![0.0; nqx * nqy];
        let bins = |ts: &[f64]| {
            let mut b: Vec<Vec<usize>> = vec![Vec::new(); k];
            for (q, &t) in ts.iter().enumerate() {
                b[self.cell(t)].push(q);
            }
            b
        };
        let (bx, by) = (bins(xs), bins(ys));
        for cy in 0..k {
            if by[cy].is_empty() {
                continue;
            }
            for cx in 0..k {
                if bx[cx].is_empty() {
                    continue;
                }
                let p = &self.patches[cy * k + cx];
                let n = p.grid_x.len();
                let ix: Vec<f64> = bx[cx]
                    .iter()
                    .flat_map(|&q| p.grid_x.interpolation_row(xs[q].clamp(0.0, 1.0)))
                    .collect();
                let iy: Vec<f64> = by[cy]
                    .iter()
                    .flat_map(|&q| p.grid_y.interpolation_row(ys[q].clamp(0.0, 1.0)))
                    .collect();
                let (mx, my) = (bx[cx].len(), by[cy].len());
                // (my × n) = Iy · V, then (my × mx) = · Ixᵀ
                let mut t = vec![0.0; my * n];
                gemm_acc(my, n, n, 1.0, &iy, n, &p.values, n, 0.0, &mut t, n);
                let mut ixt = vec![0.0; n * mx];
                for (q, row) in ix.chunks(n).enumerate() {
                    for (i, &v) in row.iter().enumerate() {
                        ixt[i * mx + q] = v;
                    }
                }
                let mut r = vec![0.0; my * mx];
                gemm_acc(my, n, mx, 1.0, &t, n, &ixt, mx, 0.0, &mut r, mx);
                for (a, &qy) in by[cy].iter().enumerate() {
                    for (b, &qx) in bx[cx].iter().enumerate() {
                        out[qy * nqx + qx] = r[a * mx + b];
                    }
                }
            }
        }
        Ok(out)
    }

    /// `(patch, x, y, u)` for every local node.
    pub fn node_rows(&self) -> Vec<(usize, f64, f64, f64)> {
        let mut rows = Vec::new();
        for (pid, p) in self.patches.iter().enumerate() {
            let n = p.grid_x.len();
            for (l, &v) in p.values.iter().enumerate() {
                rows.push((pid, p.grid_x.nodes()[l % n], p.grid_y.nodes()[l / n], v));
            }
        }
        rows
    }

    /// Rebuilds a field from [`ContinuumField::node_rows`] output.
    pub fn from_node_rows(rows: &[(usize, f64, f64, f64)]) -> Result<Self> {
        let count = rows.iter().map(|r| r.0).max().map_or(0, |m| m + 1);
        let k = (count as f64).sqrt().round() as usize;
        if k == 0 || k * k != count || !rows.len().is_multiple_of(count) {
            return Err(Error::Malformed(format!(
                "{} rows over {count} patches",
                rows.len()
            )));
        }
        let per_patch = rows.len() / count;
        let n = (per_patch as f64).sqrt().round() as usize;
        if n * n != per_patch || n < 3 {
            return Err(Error::Malformed(format!(
                "{per_patch} nodes per patch is not a square grid"
            )));
        }
        let mut patches = Vec::with_capacity(count);
        for pid in 0..count {
            let mine: Vec<_> = rows.iter().filter(|r| r.0 == pid).collect();
            if mine.len() != per_patch {
                return Err(Error::Malformed(format!(
                    "patch {pid} has {} nodes",
                    mine.len()
                )));
            }
            let [px, py] = [pid % k, pid / k];
            let edge = |i: usize| i as f64 / k as f64;
            let grid_x = ChebGrid1D::new(n - 1, (edge(px), edge(px + 1)))?;
            let grid_y = ChebGrid1D::new(n - 1, (edge(py), edge(py + 1)))?;
            let mut values = Vec::with_capacity(per_patch);
            for (l, r) in mine.iter().enumerate() {
                let (x, y) = (grid_x.nodes()[l % n], grid_y.nodes()[l / n]);
                if (r.1 - x).abs() > 1e-12 || (r.2 - y).abs() > 1e-12 {
                    return Err(Error::Malformed(format!(
                        "patch {pid} node {l} is at ({}, {})",
                        r.1, r.2
                    )));
                }
                values.push(r.3);
            }
            patches.push(PatchValues {
                grid_x,
                grid_y,
                values,
            });
        }
        Ok(Self {
            per_side: k,
            patches,
        })
    }
}

/// Field values at arbitrary points of `[0,1]²`.
pub fn evaluate_on_mesh(field: &ContinuumField, mesh: &[[f64; 2]]) -> Result<Vec<f64>> {
    mesh.iter().map(|q| field.value(q[0], q[1])).collect()
}
