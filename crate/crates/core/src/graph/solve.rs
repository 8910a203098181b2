use std::time::Instant;

use rayon::prelude::*;

use super::build::WeightedGraph;
use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::numerics::dense::Matrix;
use crate::{MinimizerResult, ENERGY_ROUNDOFF};

/// Labelled nodes of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeLabels {
    nodes: Vec<usize>,
    values: Vec<f64>,
}

impl NodeLabels {
    pub fn new(pairs: Vec<(usize, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one labelled node is required".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for &(i, y) in &pairs {
            if !seen.insert(i) {
                return Err(Error::InvalidArgument(format!("node {i} labelled twice")));
            }
            if !y.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "label of node {i} is not finite"
                )));
            }
        }
        let (nodes, values) = pairs.into_iter().unzip();
        Ok(Self { nodes, values })
    }

    /// Attaches each constraint to the graph node nearest to it.
    pub fn from_constraints(graph: &WeightedGraph, constraints: &ConstraintSet) -> Result<Self> {
        let pairs =
            constraints
                .iter()
                .map(|c| {
                    let (best, _) = graph.points().iter().enumerate().fold(
                        (0, f64::INFINITY),
                        |acc, (i, p)| {
                            let d = (p[0] - c.point[0]).powi(2) + (p[1] - c.point[1]).powi(2);
                            if d < acc.1 {
                                (i, d)
                            } else {
                                acc
                            }
                        },
                    );
                    (best, c.label)
                })
                .collect();
        Self::new(pairs)
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn range(&self) -> (f64, f64) {
        let lo = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self
            .values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    fn check(&self, n: usize) -> Result<()> {
        match self.nodes.iter().find(|&&i| i >= n) {
            Some(i) => Err(Error::InvalidArgument(format!(
                "labelled node {i} not in graph of {n} nodes"
            ))),
            None => Ok(()),
        }
    }

    fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &i in &self.nodes {
            m[i] = true;
        }
        m
    }
}

fn energy_scale(graph: &WeightedGraph, p: f64) -> f64 {
    let n = graph.len() as f64;
    let eps = graph.epsilon().unwrap_or(1.0);
    1.0 / (eps.powf(p) * n * n)
}

/// `|x|^q` with `powi` for integral exponents.
#[inline]
fn abs_pow(x: f64, q: f64) -> f64 {
    let a = x.abs();
    if q == q.trunc() && q.abs() <= 16.0 {
        a.powi(q as i32)
    } else {
        a.powf(q)
    }
}

/// `(1/(ε^p n²)) Σ_ij W_ij |f_i − f_j|^p`, summed over ordered pairs (ε = 1 for graphs without one).
pub fn discrete_energy(graph: &WeightedGraph, f: &[f64], p: f64) -> f64 {
    assert_eq!(f.len(), graph.len());
    let s: f64 = (0..graph.len())
        .into_par_iter()
        .map(|i| {
            graph
                .neighbors(i)
                .map(|(j, w)| w * abs_pow(f[i] - f[j], p))
                .sum::<f64>()
        })
        .sum();
    s * energy_scale(graph, p)
}

/// `(p/(ε^p n²)) Σ_j W_ij (f_i − f_j)|f_i − f_j|^{p−2}`, the descent direction used by the flow.
///
/// This is half the derivative of [`discrete_energy`] (each pair appears twice there).
/// Terms with `f_i = f_j` contribute zero.
pub fn discrete_gradient(graph: &WeightedGraph, f: &[f64], p: f64, fixed: &[bool]) -> Vec<f64> {
    let c = p * energy_scale(graph, p);
    (0..graph.len())
        .into_par_iter()
        .map(|i| {
            if fixed[i] {
                return 0.0;
            }
            let s: f64 = graph
                .neighbors(i)
                .map(|(j, w)| {
                    let d = f[i] - f[j];
                    if d == 0.0 {
                        0.0
                    } else {
                        w * d * abs_pow(d, p - 2.0)
                    }
                })
                .sum();
            c * s
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acceleration {
    Plain,
    Nesterov,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentOptions {
    pub p: f64,
    /// Step size; `None` selects the default bound.
    pub tau: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub accel: Acceleration,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            p: 3.0,
            tau: None,
            tol: 1e-5,
            max_iter: 100_000,
            accel: Acceleration::Nesterov,
        }
    }
}

/// `0.9 ε^p n² / (p · max_i Σ_j W_ij · R^{p−2})` with `R` the label range.
pub fn default_step(graph: &WeightedGraph, labels: &NodeLabels, p: f64) -> f64 {
    let (lo, hi) = labels.range();
    let r = (hi - lo).max(f64::EPSILON);
    let deg = graph.max_degree().max(f64::MIN_POSITIVE);
    0.9 / (energy_scale(graph, p) * p * deg * r.powf(p - 2.0))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn accepts(new: f64, old: f64) -> bool {
    new <= old + ENERGY_ROUNDOFF * old.abs()
}

/// Gradient flow `f ← f − τ ∇E(f)` on unlabelled nodes, with labelled nodes held fixed.
///
/// Steps that raise the energy are rejected: the accelerated scheme first drops its
/// momentum, then `τ` is halved. Stops once the max-norm of the gradient over free
/// nodes is at most `tol`.
pub fn minimize_discrete(
    graph: &WeightedGraph,
    labels: &NodeLabels,
    opts: &DescentOptions,
) -> Result<MinimizerResult<Vec<f64>>> {
    let start = Instant::now();
    let n = graph.len();
    labels.check(n)?;
    if !(opts.p > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "p must exceed 1, got {}",
            opts.p
        )));
    }
    let p = opts.p;
    let mut tau = opts.tau.unwrap_or_else(|| {
        let t = default_step(graph, labels, p);
        if opts.accel == Acceleration::Nesterov {
            0.5 * t
        } else {
            t
        }
    });
    if !(tau > 0.0) {
        return Err(Error::StepSize { tau });
    }
    let tau_floor = tau * 1e-14;
    let fixed = labels.mask(n);
    let mean = labels.values().iter().sum::<f64>() / labels.len() as f64;
    let mut f = vec![mean; n];
    for (&i, &y) in labels.nodes().iter().zip(labels.values()) {
        f[i] = y;
    }

    let mut energy = discrete_energy(graph, &f, p);
    let mut history = vec![energy];
    let mut grad = discrete_gradient(graph, &f, p, &fixed);
    let mut residual = max_abs(&grad);
    let mut prev = f.clone();
    let mut momentum_k = 0usize;
    let mut iterations = 0;

    while residual > opts.tol && iterations < opts.max_iter {
        // look-ahead point
        let y: Vec<f64> = if opts.accel == Acceleration::Nesterov && momentum_k > 0 {
            let beta = (momentum_k as f64 - 1.0) / (momentum_k as f64 + 2.0);
            f.iter()
                .zip(&prev)
                .map(|(a, b)| a + beta * (a - b))
                .collect()
        } else {
            f.clone()
        };
        let gy = if momentum_k > 0 && opts.accel == Acceleration::Nesterov {
            discrete_gradient(graph, &y, p, &fixed)
        } else {
            grad.clone()
        };
        let cand: Vec<f64> = y.iter().zip(&gy).map(|(a, g)| a - tau * g).collect();
        let e_new = discrete_energy(graph, &cand, p);
        if !e_new.is_finite() || !accepts(e_new, energy) {
            if momentum_k > 0 {
                momentum_k = 0;
            } else {
                tau *= 0.5;
                if tau < tau_floor {
                    return Err(Error::StepSize { tau });
                }
            }
            continue;
        }
        prev = std::mem::replace(&mut f, cand);
        energy = e_new;
        history.push(energy);
        grad = discrete_gradient(graph, &f, p, &fixed);
        residual = max_abs(&grad);
        iterations += 1;
        momentum_k += 1;
    }
    let converged = residual <= opts.tol;
    if !converged {
        log::warn!(
            "discrete descent stopped after {iterations} steps with residual {residual:.3e}"
        );
    }
    Ok(MinimizerResult {
        field: f,
        energy,
        iterations,
        residual,
        wall_time: start.elapsed(),
        converged,
        energy_history: history,
    })
}

/// Largest free-node count solved with a dense factorisation.
const DENSE_LIMIT: usize = 2500;

/// Exact minimiser at `p = 2`: the graph Laplacian system on unlabelled nodes.
pub fn solve_p2_direct(graph: &WeightedGraph, labels: &NodeLabels) -> Result<Vec<f64>> {
    let n = graph.len();
    labels.check(n)?;
    let fixed = labels.mask(n);
    let comp = graph.component_labels();
    let mut anchored = vec![false; n];
    for &i in labels.nodes() {
        anchored[comp[i]] = true;
    }
    if let Some(i) = (0..n).find(|&i| !anchored[comp[i]]) {
        return Err(Error::Singular(format!(
            "component containing node {i} has no labelled node"
        )));
    }
    let mut f = vec![0.0; n];
    for (&i, &y) in labels.nodes().iter().zip(labels.values()) {
        f[i] = y;
    }
    let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
    if free.is_empty() {
        return Ok(f);
    }
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in free.iter().enumerate() {
        pos[i] = k;
    }
    let m = free.len();
    let mut rhs = vec![0.0; m];
    let mut diag = vec![0.0; m];
    for (k, &i) in free.iter().enumerate() {
        for (j, w) in graph.neighbors(i) {
            diag[k] += w;
            if fixed[j] {
                rhs[k] += w * f[j];
            }
        }
    }
    let apply = |x: &[f64]| -> Vec<f64> {
        free.par_iter()
            .enumerate()
            .map(|(k, &i)| {
                let mut s = diag[k] * x[k];
                for (j, w) in graph.neighbors(i) {
                    if !fixed[j] {
                        s -= w * x[pos[j]];
                    }
                }
                s
            })
            .collect()
    };
    let x = if m <= DENSE_LIMIT {
        let mut a = Matrix::zeros(m, m);
        for (k, &i) in free.iter().enumerate() {
            a[(k, k)] = diag[k];
            for (j, w) in graph.neighbors(i) {
                if !fixed[j] {
                    a[(k, pos[j])] -= w;
                }
            }
        }
        a.lu()?.solve(&rhs)
    } else {
        conjugate_gradient(apply, &rhs, &diag, 1e-14, 20 * m)?
    };
    for (k, &i) in free.iter().enumerate() {
        f[i] = x[k];
    }
    Ok(f)
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive definite operator.
fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    diag: &[f64],
    rtol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; b.len()];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(a, d)| a / d).collect();
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let ad = apply(&d);
        let alpha = rz / dot(&d, &ad);
        for k in 0..x.len() {
            x[k] += alpha * d[k];
            r[k] -= alpha * ad[k];
        }
        if dot(&r, &r).sqrt() <= rtol * bnorm {
            return Ok(x);
        }
        z = r.iter().zip(diag).map(|(a, d)| a / d).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..d.len() {
            d[k] = z[k] + beta * d[k];
        }
    }
    let res = dot(&r, &r).sqrt() / bnorm;
    Err(Error::AlgebraicSolve {
        residual: res,
        limit: rtol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::WeightProfile;
    use crate::graph::build_epsilon_graph;

    fn path(n: usize) -> WeightedGraph {
        let pts = (0..n).map(|i| [i as f64, 0.0]).collect();
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
        WeightedGraph::from_edges(pts, &edges, None).unwrap()
    }

    fn opts(p: f64) -> DescentOptions {
        DescentOptions {
            p,
            tau: None,
            tol: 1e-10,
            max_iter: 200_000,
            accel: Acceleration::Nesterov,
        }
    }

    #[test]
    fn energy_two_nodes() {
        let eps = 0.5;
        let w = 3.0;
        let g = WeightedGraph::from_edges(vec![[0.0, 0.0], [0.1, 0.0]], &[(0, 1, w)], Some(eps))
            .unwrap();
        let e = discrete_energy(&g, &[0.0, 1.0], 2.0);
        assert!((e - w / (2.0 * eps * eps)).abs() < 1e-14);
        assert_eq!(discrete_energy(&g, &[0.7, 0.7], 3.0), 0.0);
    }

    #[test]
    fn path_midpoint() {
        let g = path(3);
        let labels = NodeLabels::new(vec![(0, 0.0), (2, 1.0)]).unwrap();
        let r = minimize_discrete(&g, &labels, &opts(2.0)).unwrap();
        assert!(r.converged && (r.field[1] - 0.5).abs() < 1e-9);
        assert!((solve_p2_direct(&g, &labels).unwrap()[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn path_equal_increments() {
        let g = path(5);
        let labels = NodeLabels::new(vec![(0, 0.0), (4, 1.0)]).unwrap();
        for p in [2.0, 3.0, 4.0] {
            for accel in [Acceleration::Plain, Acceleration::Nesterov] {
                let o = DescentOptions {
                    accel,
                    tol: 1e-9,
                    ..opts(p)
                };
                let r = minimize_discrete(&g, &labels, &o).unwrap();
                for (k, v) in r.field.iter().enumerate() {
                    assert!(
                        (v - 0.25 * k as f64).abs() < 1e-4,
                        "p={p} {accel:?} {:?}",
                        r.field
                    );
                }
                assert_eq!(r.monotonicity_violations(), 0);
            }
        }
    }

    #[test]
    fn constant_labels_give_constant() {
        let g = path(6);
        let labels = NodeLabels::new(vec![(0, 0.3), (3, 0.3), (5, 0.3)]).unwrap();
        let r = minimize_discrete(&g, &labels, &opts(3.0)).unwrap();
        assert!(r.field.iter().all(|v| (v - 0.3).abs() < 1e-12));
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn complete_graph_single_label() {
        let pts: Vec<[f64; 2]> = (0..5).map(|i| [i as f64, 1.0]).collect();
        let mut edges = Vec::new();
        for i in 0..5 {
            for j in i + 1..5 {
                edges.push((i, j, 1.0 + (i + j) as f64));
            }
        }
        let g = WeightedGraph::from_edges(pts, &edges, None).unwrap();
        let f = solve_p2_direct(&g, &NodeLabels::new(vec![(2, -0.7)]).unwrap()).unwrap();
        assert!(f.iter().all(|v| (v + 0.7).abs() < 1e-12));
    }

    #[test]
    fn unanchored_component_is_singular() {
        let pts = vec![[0.0, 0.0], [1.0, 0.0], [5.0, 0.0], [6.0, 0.0]];
        let g = WeightedGraph::from_edges(pts, &[(0, 1, 1.0), (2, 3, 1.0)], None).unwrap();
        let labels = NodeLabels::new(vec![(0, 1.0)]).unwrap();
        assert!(matches!(
            solve_p2_direct(&g, &labels),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn gradient_is_half_energy_derivative() {
        let pts: Vec<[f64; 2]> = (0..30)
            .map(|i| [(i as f64 * 0.37).fract(), (i as f64 * 0.61).fract()])
            .collect();
        let g = build_epsilon_graph(&pts, 0.4, WeightProfile::Indicator).unwrap();
        let f: Vec<f64> = (0..30).map(|i| (i as f64 * 1.3).sin()).collect();
        let fixed = vec![false; 30];
        for p in [1.5, 2.0, 3.0] {
            let grad = discrete_gradient(&g, &f, p, &fixed);
            let h = 1e-6;
            for i in [0, 7, 19] {
                let mut a = f.clone();
                let mut b = f.clone();
                a[i] += h;
                b[i] -= h;
                let fd = (discrete_energy(&g, &a, p) - discrete_energy(&g, &b, p)) / (2.0 * h);
                assert!(
                    (fd - 2.0 * grad[i]).abs() < 1e-5 * fd.abs().max(1.0),
                    "p={p}"
                );
            }
        }
    }

    #[test]
    fn cg_matches_dense() {
        let n = 40;
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|i| [(i as f64 * 0.137).fract(), (i as f64 * 0.731).fract()])
            .collect();
        let g = build_epsilon_graph(&pts, 0.5, WeightProfile::Indicator).unwrap();
        let labels = NodeLabels::new(vec![(0, 0.0), (1, 1.0), (2, 0.5)]).unwrap();
        let dense = solve_p2_direct(&g, &labels).unwrap();
        let fixed = labels.mask(n);
        let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
        let mut pos = vec![0; n];
        for (k, &i) in free.iter().enumerate() {
            pos[i] = k;
        }
        let diag: Vec<f64> = free.iter().map(|&i| g.degree(i)).collect();
        let rhs: Vec<f64> = free
            .iter()
            .map(|&i| {
                g.neighbors(i)
                    .filter(|(j, _)| fixed[*j])
                    .map(|(j, w)| w * dense[j])
                    .sum()
            })
            .collect();
        let x = conjugate_gradient(
            |x| {
                free.iter()
                    .enumerate()
                    .map(|(k, &i)| {
                        diag[k] * x[k]
                            - g.neighbors(i)
                                .filter(|(j, _)| !fixed[*j])
                                .map(|(j, w)| w * x[pos[j]])
                                .sum::<f64>()
                    })
                    .collect()
            },
            &rhs,
            &diag,
            1e-14,
            1000,
        )
        .unwrap();
        for (k, &i) in free.iter().enumerate() {
            assert!((x[k] - dense[i]).abs() < 1e-10);
        }
    }
}
