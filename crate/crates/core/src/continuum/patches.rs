use std::collections::HashMap;

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::numerics::{clenshaw_curtis_weights, tensor_diff_ops, ChebGrid1D, TensorDiff};

/// Largest number of patches per side tried when inferring the tiling.
const MAX_PER_SIDE: usize = 12;

/// Tolerance for matching a constraint coordinate to a lattice line.
const LATTICE_TOL: f64 = 1e-12;

/// One rectangular patch with its collocation grid.
#[derive(Debug, Clone)]
pub struct Patch {
    pub index: [usize; 2],
    pub grid_x: ChebGrid1D,
    pub grid_y: ChebGrid1D,
    pub dx: TensorDiff,
    pub dy: TensorDiff,
    /// Clenshaw–Curtis weights, x-fastest.
    pub weights: Vec<f64>,
    /// Global node id of every local node, x-fastest.
    pub global: Vec<usize>,
}

impl Patch {
    pub fn side(&self) -> usize {
        self.grid_x.len()
    }

    pub fn local_point(&self, l: usize) -> [f64; 2] {
        let n = self.side();
        [self.grid_x.nodes()[l % n], self.grid_y.nodes()[l / n]]
    }

    /// Outward normals of the patch faces containing local node `l`.
    pub fn faces_at(&self, l: usize) -> impl Iterator<Item = [f64; 2]> {
        let n = self.side();
        let (i, j) = (l % n, l / n);
        let d = n - 1;
        [
            (i == 0, [1.0, 0.0]),
            (i == d, [-1.0, 0.0]),
            (j == 0, [0.0, 1.0]),
            (j == d, [0.0, -1.0]),
        ]
        .into_iter()
        .filter(|f| f.0)
        .map(|f| f.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeRole {
    /// Strictly inside a single patch.
    Interior,
    /// On `∂[0,1]²` and owned by one patch; `normal` is diagonal at domain corners.
    Boundary { normal: [f64; 2] },
    /// Shared by several patches; value and flux are matched algebraically.
    Interface,
}

/// A distinct physical node and its copies in the patches that contain it.
#[derive(Debug, Clone)]
pub struct GlobalNode {
    pub point: [f64; 2],
    pub role: NodeRole,
    pub on_outer_boundary: bool,
    /// `(patch, local index)` pairs.
    pub copies: Vec<(usize, usize)>,
}

/// Where a constraint ended up on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub constraint: usize,
    pub nodes: Vec<usize>,
    /// Distance between the constraint point and the nodes carrying it (0 unless moved off a shared corner).
    pub offset: f64,
}

/// Uniform tiling of `[0,1]²` by Chebyshev patches.
#[derive(Debug, Clone)]
pub struct PatchedDomain {
    per_side: usize,
    points_per_patch: usize,
    patches: Vec<Patch>,
    nodes: Vec<GlobalNode>,
    placements: Vec<Placement>,
    /// Global node id → (constraint index) for constrained nodes.
    constrained: Vec<Option<usize>>,
}

impl PatchedDomain {
    pub fn per_side(&self) -> usize {
        self.per_side
    }

    pub fn points_per_patch(&self) -> usize {
        self.points_per_patch
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn nodes(&self) -> &[GlobalNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn placements(&self) -> &[Placement] {
        &self.placements
    }

    /// Constraint index carried by a global node, if any.
    pub fn constraint_at(&self, node: usize) -> Option<usize> {
        self.constrained[node]
    }

    /// Largest distance by which a constraint was moved.
    pub fn corner_offset(&self) -> f64 {
        self.placements.iter().map(|p| p.offset).fold(0.0, f64::max)
    }

    /// Patch containing `(x, y)`; points on shared edges go to the lower-index patch.
    pub fn locate(&self, x: f64, y: f64) -> Result<usize> {
        let inside = |t: f64| (-1e-12..=1.0 + 1e-12).contains(&t);
        if !inside(x) || !inside(y) {
            return Err(Error::OutOfDomain { x, y });
        }
        let k = self.per_side;
        let cell = |t: f64| ((t.clamp(0.0, 1.0) * k as f64).floor() as usize).min(k - 1);
        Ok(cell(y) * k + cell(x))
    }

    /// Global node values gathered into the local layout of `patch`.
    pub fn gather(&self, patch: usize, values: &[f64]) -> Vec<f64> {
        self.patches[patch]
            .global
            .iter()
            .map(|&g| values[g])
            .collect()
    }

    /// Coordinates of every global node.
    pub fn points(&self) -> Vec<[f64; 2]> {
        self.nodes.iter().map(|n| n.point).collect()
    }
}

fn lattice_index(t: f64, k: usize) -> Option<usize> {
    let s = t * k as f64;
    let r = s.round();
    if (s - r).abs() <= LATTICE_TOL * k as f64 && (0.0..=k as f64).contains(&r) {
        Some(r as usize)
    } else {
        None
    }
}

fn infer_per_side(constraints: &ConstraintSet) -> Result<usize> {
    (1..=MAX_PER_SIDE)
        .find(|&k| constraints.iter().all(|c| c.point.iter().all(|&t| lattice_index(t, k).is_some())))
        .ok_or_else(|| {
            Error::UnsupportedLayout(format!(
                "constraints do not lie on a uniform corner lattice with at most {MAX_PER_SIDE} patches per side"
            ))
        })
}

/// Tiles `[0,1]²` so that every constraint sits on a patch corner.
///
/// The number of patches per side is the smallest `k` for which all constraint
/// coordinates are multiples of `1/k`.
pub fn build_patches(
    constraints: &ConstraintSet,
    points_per_patch: usize,
) -> Result<PatchedDomain> {
    let k = infer_per_side(constraints)?;
    build_patches_with(constraints, points_per_patch, k)
}

/// As [`build_patches`] with an explicit number of patches per side.
///
/// Constraints at corners shared by four patches are carried by the nearest node on
/// each of the four incident interface segments instead of the corner itself.
pub fn build_patches_with(
    constraints: &ConstraintSet,
    points_per_patch: usize,
    per_side: usize,
) -> Result<PatchedDomain> {
    if points_per_patch < 3 {
        return Err(Error::InvalidOrder(points_per_patch.saturating_sub(1)));
    }
    if per_side == 0 {
        return Err(Error::UnsupportedLayout(
            "at least one patch per side is required".into(),
        ));
    }
    let k = per_side;
    let n = points_per_patch;
    let edge = |i: usize| i as f64 / k as f64;

    let mut patches = Vec::with_capacity(k * k);
    let mut nodes: Vec<GlobalNode> = Vec::new();
    let mut by_coord: HashMap<(u64, u64), usize> = HashMap::new();
    for py in 0..k {
        for px in 0..k {
            let grid_x = ChebGrid1D::new(n - 1, (edge(px), edge(px + 1)))?;
            let grid_y = ChebGrid1D::new(n - 1, (edge(py), edge(py + 1)))?;
            let (dx, dy) = tensor_diff_ops(&grid_x, &grid_y);
            let wx = clenshaw_curtis_weights(&grid_x);
            let wy = clenshaw_curtis_weights(&grid_y);
            let weights = (0..n * n).map(|l| wx[l % n] * wy[l / n]).collect();
            let pid = patches.len();
            let mut global = Vec::with_capacity(n * n);
            for l in 0..n * n {
                let p = [grid_x.nodes()[l % n], grid_y.nodes()[l / n]];
                let key = (p[0].to_bits(), p[1].to_bits());
                let id = *by_coord.entry(key).or_insert_with(|| {
                    nodes.push(GlobalNode {
                        point: p,
                        role: NodeRole::Interior,
                        on_outer_boundary: false,
                        copies: Vec::new(),
                    });
                    nodes.len() - 1
                });
                nodes[id].copies.push((pid, l));
                global.push(id);
            }
            patches.push(Patch {
                index: [px, py],
                grid_x,
                grid_y,
                dx,
                dy,
                weights,
                global,
            });
        }
    }
    for node in &mut nodes {
        let [x, y] = node.point;
        let nx: f64 = if x == 0.0 {
            -1.0
        } else if x == 1.0 {
            1.0
        } else {
            0.0
        };
        let ny: f64 = if y == 0.0 {
            -1.0
        } else if y == 1.0 {
            1.0
        } else {
            0.0
        };
        node.on_outer_boundary = nx != 0.0 || ny != 0.0;
        node.role = if node.copies.len() > 1 {
            NodeRole::Interface
        } else if node.on_outer_boundary {
            let len: f64 = (nx * nx + ny * ny).sqrt();
            NodeRole::Boundary {
                normal: [nx / len, ny / len],
            }
        } else {
            NodeRole::Interior
        };
    }

    let mut constrained = vec![None; nodes.len()];
    let mut placements = Vec::with_capacity(constraints.len());
    for (ci, c) in constraints.iter().enumerate() {
        let (Some(ix), Some(iy)) = (lattice_index(c.point[0], k), lattice_index(c.point[1], k))
        else {
            return Err(Error::UnsupportedLayout(format!(
                "constraint ({}, {}) is not a corner of the {k}x{k} tiling",
                c.point[0], c.point[1]
            )));
        };
        let key = (edge(ix).to_bits(), edge(iy).to_bits());
        let corner = by_coord[&key];
        let (targets, offset) = if nodes[corner].copies.len() > 2 {
            offset_targets(&patches, &nodes, corner)
        } else {
            (vec![corner], 0.0)
        };
        for &t in &targets {
            if let Some(other) = constrained[t] {
                return Err(Error::UnsupportedLayout(format!(
                    "constraints {other} and {ci} share a grid node"
                )));
            }
            constrained[t] = Some(ci);
        }
        placements.push(Placement {
            constraint: ci,
            nodes: targets,
            offset,
        });
    }
    Ok(PatchedDomain {
        per_side: k,
        points_per_patch: n,
        patches,
        nodes,
        placements,
        constrained,
    })
}

/// Nodes one collocation spacing away from a shared corner along each incident interface.
fn offset_targets(patches: &[Patch], nodes: &[GlobalNode], corner: usize) -> (Vec<usize>, f64) {
    let mut targets = Vec::new();
    let mut offset: f64 = 0.0;
    let c = nodes[corner].point;
    for &(pid, l) in &nodes[corner].copies {
        let patch = &patches[pid];
        let n = patch.side();
        let (i, j) = (l % n, l / n);
        // step one node inward along each patch edge through the corner
        let ni = if i == 0 { 1 } else { n - 2 };
        let nj = if j == 0 { 1 } else { n - 2 };
        for l2 in [j * n + ni, nj * n + i] {
            let g = patch.global[l2];
            if !targets.contains(&g) {
                let p = nodes[g].point;
                offset = offset.max(((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt());
                targets.push(g);
            }
        }
    }
    targets.sort_unstable();
    (targets, offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::Constraint;

    fn lattice16() -> ConstraintSet {
        let pts: Vec<[f64; 2]> = (0..16)
            .map(|k| [(k % 4) as f64 / 3.0, (k / 4) as f64 / 3.0])
            .collect();
        ConstraintSet::from_fn(&pts, |x, y| x + y).unwrap()
    }

    #[test]
    fn sixteen_constraints_give_nine_patches() {
        let d = build_patches(&lattice16(), 8).unwrap();
        assert_eq!(d.per_side(), 3);
        assert_eq!(d.patches().len(), 9);
        for p in d.patches() {
            let (a, b) = p.grid_x.interval();
            assert!((b - a - 1.0 / 3.0).abs() < 1e-15);
            assert_eq!(p.side(), 8);
        }
        // 4 interior corners, each carried by 4 offset nodes
        let moved: Vec<_> = d.placements().iter().filter(|p| p.offset > 0.0).collect();
        assert_eq!(moved.len(), 4);
        assert!(moved.iter().all(|p| p.nodes.len() == 4));
        let spacing = {
            let g = &d.patches()[0].grid_x;
            g.nodes()[0] - g.nodes()[1]
        };
        assert!((d.corner_offset() - spacing).abs() < 1e-15);
    }

    #[test]
    fn corners_only_single_patch() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let d = build_patches(&ConstraintSet::from_fn(&pts, |x, _| x).unwrap(), 6).unwrap();
        assert_eq!(d.patches().len(), 1);
        assert_eq!(
            d.placements().iter().map(|p| p.nodes.len()).sum::<usize>(),
            4
        );
        assert_eq!(d.corner_offset(), 0.0);
        for p in d.placements() {
            let node = &d.nodes()[p.nodes[0]];
            assert_eq!(node.point, pts[p.constraint]);
            match node.role {
                NodeRole::Boundary { normal } => {
                    assert!((normal[0].abs() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15)
                }
                _ => panic!("corner should be a boundary node"),
            }
        }
    }

    #[test]
    fn shared_nodes_coincide() {
        let d = build_patches(&lattice16(), 10).unwrap();
        let mut shared = 0;
        for node in d.nodes() {
            for &(pid, l) in &node.copies {
                assert_eq!(d.patches()[pid].local_point(l), node.point);
            }
            if node.copies.len() > 1 {
                shared += 1;
                assert_eq!(node.role, NodeRole::Interface);
            }
        }
        // 4 interface lines of 28 nodes, the 4 crossings counted once
        assert_eq!(shared, 4 * 28 - 4);
        assert_eq!(d.node_count(), 28 * 28);
    }

    #[test]
    fn rejects_off_lattice() {
        let c = ConstraintSet::new(vec![Constraint {
            point: [0.123456, 0.5],
            label: 1.0,
        }])
        .unwrap();
        assert!(matches!(
            build_patches(&c, 6),
            Err(Error::UnsupportedLayout(_))
        ));
    }

    #[test]
    fn locate_points() {
        let d = build_patches(&lattice16(), 5).unwrap();
        assert_eq!(d.locate(0.1, 0.1).unwrap(), 0);
        assert_eq!(d.locate(0.9, 0.5).unwrap(), 5);
        assert_eq!(d.locate(1.0, 1.0).unwrap(), 8);
        assert!(d.locate(1.2, 0.0).is_err());
    }
}
