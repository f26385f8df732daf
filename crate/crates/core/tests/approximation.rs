mod common;

use common::{interior_point, points, rng};
use maxent::approximator::l1::{least_squares_min_norm, objective, optimality_residual, solve_l1, L1Options};
use maxent::approximator::{active_nodes, fit, predict, Dataset};
use maxent::geometry::grid_nodes;
use maxent::maxent::SolverOptions;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn random_system(seed: u64, m: usize, n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut r = rng(seed);
    let phi = DMatrix::from_fn(m, n, |_, _| r.random_range(-1.0..1.0));
    let f = DVector::from_fn(m, |_, _| r.random_range(-2.0..2.0));
    (phi, f)
}

/// Minimizes a convex function of one variable on `[lo, hi]`.
fn ternary(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if f(a) <= f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn l1_objective_never_increases(seed in any::<u64>(), m in 3usize..12, n in 2usize..10, alpha in 0.001f64..2.0) {
        let (phi, f) = random_system(seed, m, n);
        let start = DVector::zeros(n);
        let sol = solve_l1(&phi, &f, alpha, &start, &L1Options::default());
        for w in sol.history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
        prop_assert!(sol.objective <= objective(&phi, &f, &start, alpha) + 1e-12);
    }

    #[test]
    fn two_coefficient_problems_match_a_search_oracle(seed in any::<u64>(), m in 3usize..10, alpha in 0.0f64..1.5) {
        let (phi, f) = random_system(seed, m, 2);
        let obj = |a0: f64, a1: f64| objective(&phi, &f, &DVector::from_vec(vec![a0, a1]), alpha);
        let inner = |a0: f64| obj(a0, ternary(-50.0, 50.0, |a1| obj(a0, a1)));
        let a0 = ternary(-50.0, 50.0, inner);
        let best = inner(a0);
        let (ls, _) = least_squares_min_norm(&phi, &f);
        let sol = solve_l1(&phi, &f, alpha, &ls, &L1Options::default());
        prop_assert!(sol.objective <= best + 1e-8 * (1.0 + best), "solver {} vs oracle {best}", sol.objective);
        prop_assert!(sol.objective >= best - 1e-8 * (1.0 + best));
    }

    #[test]
    fn optimality_certificate_holds(seed in any::<u64>(), alpha in 0.01f64..1.0) {
        let (phi, f) = random_system(seed, 12, 6);
        let (ls, _) = least_squares_min_norm(&phi, &f);
        let sol = solve_l1(&phi, &f, alpha, &ls, &L1Options::default());
        let scale = 1.0 + sol.coefficients.amax();
        prop_assert!(optimality_residual(&phi, &f, &sol.coefficients, alpha) <= 1e-7 * scale);
    }

    #[test]
    fn least_squares_matches_qr(seed in any::<u64>(), m in 6usize..15, n in 1usize..6) {
        let (phi, f) = random_system(seed, m, n);
        let (a, rank) = least_squares_min_norm(&phi, &f);
        prop_assert_eq!(rank, n);
        let qr = phi.clone().qr();
        let qtf = qr.q().transpose() * &f;
        let oracle = qr.r().solve_upper_triangular(&qtf).unwrap();
        prop_assert!((a - oracle).amax() <= 1e-9);
    }
}

fn sample_2d(seed: u64, n: usize) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..n).map(|_| vec![r.random::<f64>(), r.random::<f64>()]).collect()
}

#[test]
fn affine_data_is_reproduced_everywhere() {
    let nodes = grid_nodes(&[(0.0, 1.0), (0.0, 1.0)], &[5, 5]).unwrap();
    let xs = sample_2d(3, 60);
    let affine = |x: &[f64]| 1.5 - 2.0 * x[0] + 0.25 * x[1];
    let data = Dataset::scalar(points(&xs), xs.iter().map(|x| affine(x)).collect()).unwrap();
    let model = fit(&nodes, &data, 3.0, 0.0, &SolverOptions::default()).unwrap();
    let mut r = rng(4);
    for _ in 0..100 {
        let x = interior_point(&mut r, &nodes);
        assert!((predict(&model, &x).unwrap() - affine(&x)).abs() <= 1e-8);
    }
}

#[test]
fn least_squares_fit_is_linear_in_the_data() {
    let nodes = grid_nodes(&[(0.0, 1.0), (0.0, 1.0)], &[4, 4]).unwrap();
    let xs = sample_2d(5, 40);
    let f: Vec<f64> = xs.iter().map(|x| (3.0 * x[0]).sin() * x[1]).collect();
    let g: Vec<f64> = xs.iter().map(|x| x[0] * x[0] - x[1]).collect();
    let fg: Vec<f64> = f.iter().zip(&g).map(|(a, b)| 2.0 * a - b).collect();
    let opts = SolverOptions::default();
    let fit_of = |v: &[f64]| fit(&nodes, &Dataset::scalar(points(&xs), v.to_vec()).unwrap(), 2.0, 0.0, &opts).unwrap();
    let (mf, mg, mfg) = (fit_of(&f), fit_of(&g), fit_of(&fg));
    for i in 0..nodes.len() {
        let combined = 2.0 * mf.coefficients[i] - mg.coefficients[i];
        assert!((combined - mfg.coefficients[i]).abs() <= 1e-9);
    }
}

#[test]
fn larger_alpha_gives_sparser_models() {
    let grid = grid_nodes(&[(0.0, 1.0)], &[15]).unwrap();
    let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 39.0]).collect();
    let data = Dataset::scalar(points(&xs), xs.iter().map(|x| (2.0 * std::f64::consts::PI * x[0]).sin()).collect()).unwrap();
    let opts = SolverOptions::default();
    let dense = fit(&grid, &data, 100.0, 0.0, &opts).unwrap();
    let sparse = fit(&grid, &data, 100.0, 0.5, &opts).unwrap();
    let nd = active_nodes(&dense, 1e-3).unwrap().len();
    let ns = active_nodes(&sparse, 1e-3).unwrap().len();
    assert!(ns < nd, "α = 0.5 keeps {ns} nodes, α = 0 keeps {nd}");
    assert!(sparse.fit_report.training_rms > dense.fit_report.training_rms);
}
