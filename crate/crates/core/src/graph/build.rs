use rayon::prelude::*;

use crate::density::kde::CellIndex;
use crate::density::WeightProfile;
use crate::error::{Error, Result};

/// Sparse symmetric weighted graph over planar points, stored as CSR.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    points: Vec<[f64; 2]>,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
    epsilon: Option<f64>,
    components: usize,
}

impl WeightedGraph {
    /// Builds a graph from undirected edges `(i, j, w)`; each pair may appear once in either orientation.
    pub fn from_edges(
        points: Vec<[f64; 2]>,
        edges: &[(usize, usize, f64)],
        epsilon: Option<f64>,
    ) -> Result<Self> {
        let n = points.len();
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self-loop at node {i}")));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i}, {j}) has weight {w}"
                )));
            }
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for (i, row) in adj.iter_mut().enumerate() {
            row.sort_by_key(|e| e.0);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate edge at node {i}"
                )));
            }
        }
        Ok(Self::from_adjacency(points, adj, epsilon))
    }

    fn from_adjacency(
        points: Vec<[f64; 2]>,
        adj: Vec<Vec<(usize, f64)>>,
        epsilon: Option<f64>,
    ) -> Self {
        let mut offsets = Vec::with_capacity(points.len() + 1);
        offsets.push(0);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        for row in &adj {
            for &(j, w) in row {
                targets.push(j);
                weights.push(w);
            }
            offsets.push(targets.len());
        }
        let mut g = Self {
            points,
            offsets,
            targets,
            weights,
            epsilon,
            components: 0,
        };
        g.components = g.count_components();
        g
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    /// Neighbours of `i` with their weights, sorted by index.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.targets[r.clone()]
            .iter()
            .copied()
            .zip(self.weights[r].iter().copied())
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let r = self.offsets[i]..self.offsets[i + 1];
        match self.targets[r.clone()].binary_search(&j) {
            Ok(k) => self.weights[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// Number of stored directed entries (twice the undirected edge count).
    pub fn nnz(&self) -> usize {
        self.targets.len()
    }

    /// Undirected edges with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        (0..self.len())
            .flat_map(|i| {
                self.neighbors(i)
                    .filter(move |&(j, _)| j > i)
                    .map(move |(j, w)| (i, j, w))
            })
            .collect()
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.weights[self.offsets[i]..self.offsets[i + 1]]
            .iter()
            .sum()
    }

    pub fn max_degree(&self) -> f64 {
        (0..self.len()).map(|i| self.degree(i)).fold(0.0, f64::max)
    }

    pub fn edge_count_of(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn component_count(&self) -> usize {
        self.components
    }

    pub fn is_connected(&self) -> bool {
        self.components <= 1
    }

    /// Component label of every node (labels are representative node indices).
    pub fn component_labels(&self) -> Vec<usize> {
        let mut uf = UnionFind::new(self.len());
        for i in 0..self.len() {
            for (j, w) in self.neighbors(i) {
                if w > 0.0 {
                    uf.union(i, j);
                }
            }
        }
        (0..self.len()).map(|i| uf.find(i)).collect()
    }

    fn count_components(&self) -> usize {
        let labels = self.component_labels();
        labels.iter().enumerate().filter(|(i, &l)| *i == l).count()
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

fn warn_if_disconnected(g: &WeightedGraph) {
    if !g.is_connected() {
        log::warn!(
            "graph on {} nodes is disconnected: {} components",
            g.len(),
            g.component_count()
        );
    }
}

/// ε-ball graph with `W_ij = ε⁻² η(|x_i − x_j| / ε)`.
pub fn build_epsilon_graph(
    samples: &[[f64; 2]],
    epsilon: f64,
    eta: WeightProfile,
) -> Result<WeightedGraph> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let support = eta.support().ok_or_else(|| {
        Error::InvalidArgument(format!("weight profile {eta} has unbounded support"))
    })?;
    let radius = support * epsilon;
    let scale = 1.0 / (epsilon * epsilon);
    let index = CellIndex::new(samples, radius.max(f64::MIN_POSITIVE));
    let adj: Vec<Vec<(usize, f64)>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut row = Vec::new();
            index.for_each_near(p, radius, |j| {
                if j == i {
                    return;
                }
                let q = samples[j];
                let r = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                if r <= radius {
                    let w = scale * eta.eval(r / epsilon);
                    if w > 0.0 {
                        row.push((j, w));
                    }
                }
            });
            row.sort_by_key(|e| e.0);
            row
        })
        .collect();
    let g = WeightedGraph::from_adjacency(samples.to_vec(), adj, Some(epsilon));
    warn_if_disconnected(&g);
    Ok(g)
}

/// Symmetrised k-nearest-neighbour graph with unit weights.
pub fn build_knn_graph(samples: &[[f64; 2]], k: usize) -> Result<WeightedGraph> {
    let n = samples.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidK { k, n });
    }
    let guess = ((k as f64 + 1.0) / (std::f64::consts::PI * n as f64))
        .sqrt()
        .max(1e-6);
    let index = CellIndex::new(samples, guess);
    let lists: Vec<Vec<usize>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut r = guess;
            loop {
                let mut cand: Vec<(f64, usize)> = Vec::new();
                index.for_each_near(p, r, |j| {
                    if j != i {
                        let q = samples[j];
                        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                        if d2 <= r * r {
                            cand.push((d2, j));
                        }
                    }
                });
                if cand.len() >= k {
                    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    return cand[..k].iter().map(|c| c.1).collect();
                }
                r *= 2.0;
            }
        })
        .collect();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, list) in lists.iter().enumerate() {
        for &j in list {
            adj[i].push((j, 1.0));
            adj[j].push((i, 1.0));
        }
    }
    for row in &mut adj {
        row.sort_by_key(|e| e.0);
        row.dedup_by_key(|e| e.0);
    }
    let g = WeightedGraph::from_adjacency(samples.to_vec(), adj, None);
    warn_if_disconnected(&g);
    Ok(g)
}

/// Geometric mean of `(1/n)^{1/p}` and `(log n)^{3/4} / √n`.
pub fn epsilon_midpoint(n: usize, p: f64) -> f64 {
    let n = n as f64;
    let upper = (1.0 / n).powf(1.0 / p);
    let lower = n.ln().powf(0.75) / n.sqrt();
    (upper * lower).sqrt()
}
