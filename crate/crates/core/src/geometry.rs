//! Node sets, shifted coordinates and convex-hull membership.

use std::ops::Deref;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp;

/// Default absolute tolerance for hull membership, in node coordinates.
pub const DEFAULT_HULL_TOL: f64 = 1e-9;

/// Two nodes closer than this (max-norm) are treated as duplicates.
pub const DUPLICATE_TOL: f64 = 1e-12;

/// A finite point in `R^d`, `d ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Domain("point must have at least one coordinate".into()));
        }
        if let Some(v) = coords.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite coordinate {v}")));
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Point {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Vec<f64> {
        p.0
    }
}

/// An ordered set of basis nodes sharing one dimension.
///
/// Nodes are stored contiguously, node `i` occupying `coords[i*d..(i+1)*d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NodeSetRepr", into = "NodeSetRepr")]
pub struct NodeSet {
    dim: usize,
    coords: Vec<f64>,
    degenerate: bool,
}

#[derive(Serialize, Deserialize)]
struct NodeSetRepr {
    nodes: Vec<Vec<f64>>,
}

impl TryFrom<NodeSetRepr> for NodeSet {
    type Error = Error;
    fn try_from(r: NodeSetRepr) -> Result<Self> {
        NodeSet::from_rows(r.nodes)
    }
}

impl From<NodeSet> for NodeSetRepr {
    fn from(n: NodeSet) -> Self {
        NodeSetRepr { nodes: n.to_rows() }
    }
}

impl NodeSet {
    pub fn new(nodes: Vec<Point>) -> Result<Self> {
        let Some(first) = nodes.first() else {
            return Err(Error::Domain("node set must not be empty".into()));
        };
        let dim = first.dim();
        let mut coords = Vec::with_capacity(dim * nodes.len());
        for p in &nodes {
            if p.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: p.dim(),
                });
            }
            coords.extend_from_slice(p);
        }
        let mut set = NodeSet {
            dim,
            coords,
            degenerate: false,
        };
        set.degenerate = set.affine_rank() < dim;
        Ok(set)
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        NodeSet::new(rows.into_iter().map(Point::new).collect::<Result<_>>()?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// True when the nodes do not affinely span `R^d`.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter().map(<[f64]>::to_vec).collect()
    }

    /// Per-axis `(min, max)` of the nodes.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); self.dim];
        for node in self.iter() {
            for (b, &v) in bounds.iter_mut().zip(node) {
                b.0 = b.0.min(v);
                b.1 = b.1.max(v);
            }
        }
        bounds
    }

    fn affine_rank(&self) -> usize {
        let n = self.len();
        if n < 2 {
            return 0;
        }
        let d = self.dim;
        let mut centroid = vec![0.0; d];
        for node in self.iter() {
            for (c, v) in centroid.iter_mut().zip(node) {
                *c += v / n as f64;
            }
        }
        let centered = DMatrix::from_fn(d, n, |k, i| self.node(i)[k] - centroid[k]);
        let sv = centered.singular_values();
        let smax = sv.max();
        if smax == 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s > 1e-10 * smax).count()
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(())
    }
}

/// Node coordinates relative to a query point: column `i` is `nodes[i] - origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedNodes {
    pub tilde: DMatrix<f64>,
    pub origin: Point,
}

impl ShiftedNodes {
    pub fn dim(&self) -> usize {
        self.tilde.nrows()
    }

    pub fn len(&self) -> usize {
        self.tilde.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.tilde.ncols() == 0
    }

    /// Squared Euclidean length of column `i`.
    pub fn norm_sq(&self, i: usize) -> f64 {
        self.tilde.column(i).norm_squared()
    }
}

pub fn shift(nodes: &NodeSet, x: &[f64]) -> Result<ShiftedNodes> {
    nodes.check_dim(x)?;
    let d = nodes.dim();
    let tilde = DMatrix::from_fn(d, nodes.len(), |k, i| nodes.node(i)[k] - x[k]);
    Ok(ShiftedNodes {
        tilde,
        origin: Point::new(x.to_vec())?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Membership {
    Interior,
    Boundary,
    Outside,
}

/// Result of a hull membership test together with its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct HullMembership {
    pub status: Membership,
    /// Convex weights with `Σw = 1` and `Σ wᵢ xᵢ ≈ x` (absent when outside).
    pub weights: Option<Vec<f64>>,
    /// Smallest certificate weight; strictly positive for interior points.
    pub min_weight: f64,
    /// Residual of the phase-one feasibility problem.
    pub infeasibility: f64,
}

/// Classifies `x` against `Conv(nodes)` by solving a linear feasibility
/// program in the weights.
///
/// The program maximizes the smallest weight `t` over `w = v + t·1`, `v ≥ 0`,
/// `Σw = 1`, `Σ wᵢ x̃ᵢ = 0`. Infeasible means outside; an optimal `t` that is
/// zero within tolerance means the point only admits boundary combinations.
pub fn in_hull(nodes: &NodeSet, x: &[f64], tol: f64) -> Result<HullMembership> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("hull tolerance must be positive, got {tol}")));
    }
    let shifted = shift(nodes, x)?;
    let (d, n) = (shifted.dim(), shifted.len());

    let mut a = vec![vec![0.0; n + 1]; d + 1];
    for k in 0..d {
        let row = &mut a[k];
        let mut sum = 0.0;
        for i in 0..n {
            row[i] = shifted.tilde[(k, i)];
            sum += row[i];
        }
        row[n] = sum;
    }
    for v in a[d].iter_mut().take(n) {
        *v = 1.0;
    }
    a[d][n] = n as f64;
    let mut b = vec![0.0; d + 1];
    b[d] = 1.0;
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;

    let sol = lp::maximize(&a, &b, &c, tol);
    if !sol.feasible {
        return Ok(HullMembership {
            status: Membership::Outside,
            weights: None,
            min_weight: 0.0,
            infeasibility: sol.infeasibility,
        });
    }
    let t = sol.x[n];
    let weights: Vec<f64> = sol.x[..n].iter().map(|v| v + t).collect();
    let radius = shifted
        .tilde
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    // t·N·R is a lower proxy for the distance from x to the hull boundary.
    let status = if t * n as f64 * radius > tol {
        Membership::Interior
    } else {
        Membership::Boundary
    };
    Ok(HullMembership {
        status,
        weights: Some(weights),
        min_weight: t,
        infeasibility: sol.infeasibility,
    })
}

/// Tensor-product grid with `counts[k]` uniformly spaced values on each
/// `bounds[k]`, endpoints included. The first axis varies slowest.
pub fn grid_nodes(bounds: &[(f64, f64)], counts: &[usize]) -> Result<NodeSet> {
    if bounds.is_empty() || bounds.len() != counts.len() {
        return Err(Error::Config(format!(
            "grid needs one count per axis ({} bounds, {} counts)",
            bounds.len(),
            counts.len()
        )));
    }
    for (k, (&(lo, hi), &c)) in bounds.iter().zip(counts).enumerate() {
        if c < 2 {
            return Err(Error::Config(format!(
                "axis {k}: grid count {c} < 2 makes a degenerate hull"
            )));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("axis {k}: invalid bounds ({lo}, {hi})")));
        }
    }
    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .zip(counts)
        .map(|(&(lo, hi), &c)| {
            (0..c)
                .map(|j| {
                    if j == c - 1 {
                        hi
                    } else {
                        lo + (hi - lo) * j as f64 / (c - 1) as f64
                    }
                })
                .collect()
        })
        .collect();
    let total: usize = counts.iter().product();
    let d = bounds.len();
    let mut coords = Vec::with_capacity(total * d);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        coords.extend(idx.iter().enumerate().map(|(k, &j)| axes[k][j]));
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(NodeSet {
        dim: d,
        coords,
        degenerate: false,
    })
}

/// Outcome of [`augment_nodes`].
#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub nodes: NodeSet,
    /// Indices into the candidate list, in selection order.
    pub selected: Vec<usize>,
    /// Set when fewer than `k` distinct candidates were available.
    pub shortfall: bool,
}

/// Adds `k` data points to `grid` by farthest-point (maximin) subsampling.
///
/// Each step picks the candidate whose distance to the current node set is
/// largest. Candidates within [`DUPLICATE_TOL`] of an existing node are never
/// picked. Ties are broken by a seeded shuffle of the candidate order.
pub fn augment_nodes(grid: &NodeSet, data: &[Point], k: usize, seed: u64) -> Result<Augmented> {
    if k > data.len() {
        return Err(Error::Config(format!(
            "cannot select {k} nodes from {} data points",
            data.len()
        )));
    }
    for p in data {
        grid.check_dim(p)?;
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let dist_sq = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };
    let is_dup = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= DUPLICATE_TOL);

    // nearest squared distance to the current node set, and duplicate flag
    let mut nearest: Vec<f64> = vec![f64::INFINITY; data.len()];
    let mut dup = vec![false; data.len()];
    let update = |node: &[f64], nearest: &mut [f64], dup: &mut [bool]| {
        for (i, p) in data.iter().enumerate() {
            nearest[i] = nearest[i].min(dist_sq(p, node));
            if is_dup(p, node) {
                dup[i] = true;
            }
        }
    };
    for node in grid.iter() {
        update(node, &mut nearest, &mut dup);
    }

    let mut coords = grid.coords.clone();
    let mut selected = Vec::with_capacity(k);
    while selected.len() < k {
        let mut best: Option<usize> = None;
        for &i in &order {
            if dup[i] {
                continue;
            }
            if best.is_none_or(|b| nearest[i] > nearest[b]) {
                best = Some(i);
            }
        }
        let Some(i) = best else { break };
        selected.push(i);
        coords.extend_from_slice(&data[i]);
        update(&data[i], &mut nearest, &mut dup);
    }
    let shortfall = selected.len() < k;
    if shortfall {
        log::warn!(
            "node augmentation: only {} distinct candidates for {k} requested",
            selected.len()
        );
    }
    let mut nodes = NodeSet {
        dim: grid.dim,
        coords,
        degenerate: false,
    };
    nodes.degenerate = grid.degenerate && nodes.affine_rank() < nodes.dim;
    Ok(Augmented {
        nodes,
        selected,
        shortfall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(rows: &[&[f64]]) -> NodeSet {
        NodeSet::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn shift_examples() {
        let line = pts(&[&[0.0], &[1.0]]);
        assert_eq!(shift(&line, &[0.0]).unwrap().tilde.as_slice(), &[0.0, 1.0]);
        assert_eq!(shift(&line, &[0.25]).unwrap().tilde.as_slice(), &[-0.25, 0.75]);
        let tri = pts(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let s = shift(&tri, &[0.25, 0.25]).unwrap();
        assert_eq!(s.tilde.as_slice(), &[-0.25, -0.25, 0.75, -0.25, -0.25, 0.75]);
        assert!(matches!(shift(&tri, &[0.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn hull_examples() {
        let line = pts(&[&[0.0], &[1.0]]);
        assert_eq!(in_hull(&line, &[0.5], 1e-9).unwrap().status, Membership::Interior);
        assert_eq!(in_hull(&line, &[1.0], 1e-9).unwrap().status, Membership::Boundary);
        let tri = pts(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(in_hull(&tri, &[1.0, 1.0], 1e-9).unwrap().status, Membership::Outside);
        assert_eq!(in_hull(&tri, &[0.5, 0.5], 1e-9).unwrap().status, Membership::Boundary);
        assert_eq!(in_hull(&tri, &[0.2, 0.2], 1e-9).unwrap().status, Membership::Interior);
        assert!(in_hull(&tri, &[0.2, 0.2], 0.0).is_err());
    }

    #[test]
    fn hull_on_degenerate_set_uses_affine_span() {
        let seg = pts(&[&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0]]);
        assert!(seg.is_degenerate());
        assert_ne!(in_hull(&seg, &[0.5, 0.5], 1e-9).unwrap().status, Membership::Outside);
        assert_eq!(in_hull(&seg, &[0.5, 0.6], 1e-9).unwrap().status, Membership::Outside);
        assert_eq!(in_hull(&seg, &[3.0, 3.0], 1e-9).unwrap().status, Membership::Outside);
    }

    #[test]
    fn hull_slightly_outside_grid() {
        let grid = grid_nodes(&[(0.0, 1.0), (0.0, 1.0)], &[3, 3]).unwrap();
        assert_eq!(in_hull(&grid, &[1.0 + 1e-6, 0.5], 1e-9).unwrap().status, Membership::Outside);
        assert_eq!(in_hull(&grid, &[1.0, 1.0], 1e-9).unwrap().status, Membership::Boundary);
        assert_eq!(in_hull(&grid, &[0.999, 0.001], 1e-9).unwrap().status, Membership::Interior);
    }

    #[test]
    fn grid_examples() {
        let g = grid_nodes(&[(0.0, 1.0)], &[10]).unwrap();
        assert_eq!(g.len(), 10);
        assert_eq!(g.node(0), &[0.0]);
        assert_eq!(g.node(9), &[1.0]);
        assert!((g.node(1)[0] - 1.0 / 9.0).abs() < 1e-16);
        assert_eq!(grid_nodes(&[(0.0, 1.0), (0.0, 1.0)], &[8, 8]).unwrap().len(), 64);
        assert_eq!(grid_nodes(&[(0.0, 2.0)], &[2]).unwrap().to_rows(), vec![vec![0.0], vec![2.0]]);
        assert!(matches!(grid_nodes(&[(0.0, 1.0)], &[1]), Err(Error::Config(_))));
        assert!(matches!(grid_nodes(&[(1.0, 0.0)], &[3]), Err(Error::Config(_))));
        let g2 = grid_nodes(&[(0.0, 1.0), (10.0, 11.0)], &[2, 3]).unwrap();
        assert_eq!(g2.node(1), &[0.0, 10.5]);
        assert_eq!(g2.node(3), &[1.0, 10.0]);
    }

    #[test]
    fn augment_examples() {
        let grid = pts(&[&[0.0], &[1.0]]);
        let data: Vec<Point> = [0.5, 0.5 + 1e-15]
            .iter()
            .map(|&v| Point::new(vec![v]).unwrap())
            .collect();
        let a = augment_nodes(&grid, &data, 2, 7).unwrap();
        assert_eq!(a.nodes.len(), 3);
        assert!((a.nodes.node(2)[0] - 0.5).abs() < 1e-14);
        assert!(a.shortfall);

        let none = augment_nodes(&grid, &data, 0, 7).unwrap();
        assert_eq!(none.nodes, grid);
        assert!(!none.shortfall);
        assert!(augment_nodes(&grid, &data, 3, 7).is_err());
    }

    #[test]
    fn augment_is_maximin() {
        let grid = pts(&[&[0.0], &[1.0]]);
        let data: Vec<Point> = [0.1, 0.45, 0.9, 0.3]
            .iter()
            .map(|&v| Point::new(vec![v]).unwrap())
            .collect();
        let a = augment_nodes(&grid, &data, 2, 0).unwrap();
        assert_eq!(a.selected, vec![1, 3]);
    }

    #[test]
    fn point_rejects_non_finite() {
        assert!(Point::new(vec![f64::NAN]).is_err());
        assert!(Point::new(vec![]).is_err());
    }
}
