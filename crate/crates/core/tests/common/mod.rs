#![allow(dead_code)]

use maxent::geometry::{NodeSet, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` points uniform in the unit cube of dimension `d`.
pub fn random_nodes(rng: &mut ChaCha8Rng, d: usize, n: usize) -> NodeSet {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    NodeSet::from_rows(rows).unwrap()
}

/// A random convex combination of the nodes, hence inside their hull.
pub fn interior_point(rng: &mut ChaCha8Rng, nodes: &NodeSet) -> Vec<f64> {
    let w: Vec<f64> = (0..nodes.len()).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = w.iter().sum();
    let mut x = vec![0.0; nodes.dim()];
    for (i, wi) in w.iter().enumerate() {
        for (xk, nk) in x.iter_mut().zip(nodes.node(i)) {
            *xk += wi / s * nk;
        }
    }
    x
}

pub fn points(rows: &[Vec<f64>]) -> Vec<Point> {
    rows.iter().map(|r| Point::new(r.clone()).unwrap()).collect()
}

/// `Σ ψᵢ xᵢ − x` in the ∞-norm.
pub fn reproduction_error(nodes: &NodeSet, weights: &[f64], x: &[f64]) -> f64 {
    let mut acc = vec![0.0; nodes.dim()];
    for (i, w) in weights.iter().enumerate() {
        for (a, n) in acc.iter_mut().zip(nodes.node(i)) {
            *a += w * n;
        }
    }
    acc.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// One-dimensional local max-ent weights by bisection on the multiplier.
///
/// `g(λ) = Σ ψᵢ(λ) x̃ᵢ` is strictly decreasing, so its root is bracketed and
/// bisected to machine precision.
pub fn bisection_weights_1d(nodes: &[f64], x: f64, beta: f64) -> Vec<f64> {
    let t: Vec<f64> = nodes.iter().map(|n| n - x).collect();
    let weights = |lam: f64| -> Vec<f64> {
        let e: Vec<f64> = t.iter().map(|ti| -beta * ti * ti - lam * ti).collect();
        let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = e.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    };
    let g = |lam: f64| -> f64 { weights(lam).iter().zip(&t).map(|(w, ti)| w * ti).sum() };
    let (mut lo, mut hi) = (-1.0, 1.0);
    while g(lo) < 0.0 {
        lo *= 2.0;
    }
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    weights(0.5 * (lo + hi))
}

/// Convergence order from errors at successively halved steps.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
