mod common;

use lfa::assignment::{cosine_cost, harden, sinkhorn, sinkhorn_plan, ulfa, ColumnMarginal, SinkhornConfig};
use lfa::{
    beta_procrustes, orthogonal_procrustes, BetaParam, FeatureMatrix, LinearMap, Mat, PrototypeMatrix, RefineConfig,
    Rng,
};
use proptest::prelude::*;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn low_epsilon_plan_hardens_to_optimal_permutation() {
    let mut rng = Rng::new(21);
    let cfg = SinkhornConfig {
        epsilon: 0.01,
        iters: 2000,
        tol: Some(1e-9),
        ..SinkhornConfig::default()
    };
    let mut checked = 0;
    while checked < 30 {
        let n = 2 + rng.below(3);
        let cost = Mat::from_fn(n, n, |_, _| 2.0 * rng.uniform());
        let mut totals: Vec<(f64, Vec<usize>)> = permutations(n)
            .into_iter()
            .map(|p| ((0..n).map(|i| cost[(i, p[i])]).sum(), p))
            .collect();
        totals.sort_by(|a, b| a.0.total_cmp(&b.0));
        if totals[1].0 - totals[0].0 < 0.15 {
            continue;
        }
        let (_, labels) = harden(&sinkhorn_plan(&cost, &cfg).unwrap().plan);
        assert_eq!(labels, totals[0].1, "cost {cost:?}");
        checked += 1;
    }
}

#[test]
fn plan_has_scaled_kernel_form() {
    // P = diag(u) K diag(v) ⇔ every 2×2 cross-ratio of P equals that of K
    let mut rng = Rng::new(22);
    let eps = 0.3;
    let cost = Mat::from_fn(5, 3, |_, _| rng.uniform());
    let cfg = SinkhornConfig {
        epsilon: eps,
        ..SinkhornConfig::default()
    };
    let p = sinkhorn_plan(&cost, &cfg).unwrap().plan.data;
    for (i, k) in [(0, 1), (2, 4), (1, 3)] {
        for (j, l) in [(0, 1), (1, 2), (0, 2)] {
            let lhs = (p[(i, j)] * p[(k, l)] / (p[(i, l)] * p[(k, j)])).ln();
            let rhs = -(cost[(i, j)] + cost[(k, l)] - cost[(i, l)] - cost[(k, j)]) / eps;
            assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}

#[test]
fn default_sweeps_are_reported_and_not_converged_without_tol() {
    let cost = Mat::from_fn(6, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 / 5.0);
    let run = sinkhorn_plan(&cost, &SinkhornConfig::default()).unwrap();
    assert_eq!(run.residuals.len(), 100);
    assert!(!run.converged);
}

#[test]
fn tolerance_stops_early() {
    let cost = Mat::from_fn(6, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 / 5.0);
    let cfg = SinkhornConfig {
        epsilon: 0.5,
        iters: 10_000,
        tol: Some(1e-10),
        ..SinkhornConfig::default()
    };
    let run = sinkhorn_plan(&cost, &cfg).unwrap();
    assert!(run.converged);
    assert!(run.residuals.len() < 10_000);
    assert!(*run.residuals.last().unwrap() <= 1e-10);
}

#[test]
fn custom_marginal_is_met() {
    let mut rng = Rng::new(23);
    let cost = Mat::from_fn(12, 3, |_, _| rng.uniform());
    let cfg = SinkhornConfig {
        epsilon: 0.2,
        iters: 5000,
        tol: Some(1e-10),
        col_marginal: ColumnMarginal::Custom(vec![1.0, 2.0, 3.0]),
    };
    let cols = sinkhorn_plan(&cost, &cfg).unwrap().plan.col_sums();
    for (got, want) in cols.iter().zip([2.0, 4.0, 6.0]) {
        assert!((got - want).abs() < 1e-8);
    }
}

#[test]
fn tiny_epsilon_underflow_is_named() {
    let cost = Mat::from_fn(3, 2, |i, j| (i + j) as f64);
    let cfg = SinkhornConfig {
        epsilon: 1e-300,
        ..SinkhornConfig::default()
    };
    if let Err(e) = sinkhorn_plan(&cost, &cfg) {
        assert_eq!(e.name(), "NumericalUnderflow");
    }
}

#[test]
fn cosine_cost_matches_oracle() {
    let mut rng = Rng::new(24);
    let x = FeatureMatrix::<f64>::new(&rng.gaussian_matrix(7, 4, 1.0)).unwrap();
    let y = PrototypeMatrix::<f64>::unnamed(&rng.gaussian_matrix(3, 4, 1.0)).unwrap();
    let w = LinearMap::new(rng.gaussian_matrix(4, 4, 1.0), lfa::MapKind::Refined).unwrap();
    let cost = cosine_cost(x.matrix(), &w, &y).unwrap();
    let z = common::oracle::matmul(&common::to_rows(x.matrix()), &common::to_rows(&w.data));
    for (i, zi) in z.iter().enumerate() {
        for j in 0..3 {
            let yj = y.row(j);
            let cos = common::oracle::dot(zi, yj) / common::oracle::dot(zi, zi).sqrt();
            assert!((cost[(i, j)] - (1.0 - cos)).abs() < 1e-12);
        }
    }
}

#[test]
fn ulfa_without_rounds_is_beta_procrustes_of_initial_assignment() {
    let mut rng = Rng::new(25);
    let x = FeatureMatrix::<f64>::new(&rng.gaussian_matrix(30, 6, 1.0)).unwrap();
    let y = PrototypeMatrix::<f64>::unnamed(&rng.gaussian_matrix(5, 6, 1.0)).unwrap();
    let sk = SinkhornConfig::default();
    let beta = BetaParam::new(0.4).unwrap();
    let out = ulfa(&x, &y, 0, beta, &RefineConfig::default(), &sk).unwrap();
    let p = sinkhorn(&x, &LinearMap::identity(6), &y, &sk).unwrap();
    let w_op = orthogonal_procrustes(&x, &p.times(&y).unwrap()).unwrap();
    let expect = beta_procrustes(&w_op, beta);
    assert_eq!(out.w.data, expect.data);
    assert_eq!(out.initial_labels, harden(&p).1);
}

#[test]
fn ulfa_is_deterministic() {
    let mut rng = Rng::new(26);
    let x = FeatureMatrix::<f64>::new(&rng.gaussian_matrix(40, 6, 1.0)).unwrap();
    let y = PrototypeMatrix::<f64>::unnamed(&rng.gaussian_matrix(4, 6, 1.0)).unwrap();
    let cfg = RefineConfig {
        steps: 20,
        seed: 3,
        ..RefineConfig::default()
    };
    let run = || ulfa(&x, &y, 2, BetaParam::new(0.9).unwrap(), &cfg, &SinkhornConfig::default()).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.w.data, b.w.data);
    assert_eq!(a.labels, b.labels);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn residuals_are_monotone_and_rows_exact(
        seed in 0u64..10_000,
        n in 2usize..40,
        c in 2usize..8,
        eps in prop::sample::select(vec![0.05, 0.1, 0.5, 1.0]),
    ) {
        let mut rng = Rng::new(seed);
        let cost = Mat::from_fn(n, c, |_, _| 2.0 * rng.uniform());
        let cfg = SinkhornConfig { epsilon: eps, iters: 200, ..SinkhornConfig::default() };
        let run = sinkhorn_plan(&cost, &cfg).unwrap();
        for w in run.residuals.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-13, "{} then {}", w[0], w[1]);
        }
        for s in run.plan.row_sums() {
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
        prop_assert!(run.plan.data.as_slice().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn harden_picks_row_argmax(seed in 0u64..10_000, n in 1usize..20, c in 2usize..6) {
        let mut rng = Rng::new(seed);
        let cost = Mat::from_fn(n, c, |_, _| rng.uniform());
        let plan = sinkhorn_plan(&cost, &SinkhornConfig { epsilon: 0.3, ..SinkhornConfig::default() }).unwrap().plan;
        let (hard, labels) = harden(&plan);
        for (i, &l) in labels.iter().enumerate() {
            let row = plan.data.row(i);
            prop_assert!(row.iter().all(|&v| v <= row[l]));
            prop_assert_eq!(hard.data.row(i).iter().sum::<f64>(), 1.0);
            prop_assert_eq!(hard.data[(i, l)], 1.0);
        }
    }
}
