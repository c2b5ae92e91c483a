mod common;

use common::{quad, random_spd, random_vector, v};
use mvopt_core::frontier::{
    self, efficient_frontier, linspace, markowitz_closed_form, markowitz_qp, resampled_weights,
    resampled_weights_from_indices, ActiveConstraints, Bounds, InfeasiblePolicy,
};
use mvopt_core::moments::MomentEstimate;
use mvopt_core::qp;
use mvopt_core::rng;
use mvopt_core::simlab::Scenario;
use mvopt_core::{Error, Matrix, ReturnsPanel, Vector};
use proptest::prelude::*;

fn kkt_oracle_2x2() {
    // min wᵀw s.t. w1 + w2 = 1, w1 + 2 w2 = 1.5: both constraints pin w.
    let w2 = 1.5 - 1.0;
    let w1 = 1.0 - w2;
    let w = markowitz_closed_form(&v(&[1.0, 2.0]), &Matrix::identity(2, 2), 1.5).unwrap();
    assert!((w.w[0] - w1).abs() < 1e-12 && (w.w[1] - w2).abs() < 1e-12);
}

#[test]
fn two_asset_identity_matches_hand_solution() {
    kkt_oracle_2x2();
}

#[test]
fn closed_form_hits_largest_freq1_mean() {
    let s = Scenario::freq(1);
    let (mu, sigma) = s.truth().unwrap();
    let w = markowitz_closed_form(&mu, &sigma, 3.47).unwrap();
    assert!((w.w.dot(&mu) - 3.47).abs() < 1e-10);
    assert!((w.w.sum() - 1.0).abs() < 1e-10);
}

#[test]
fn closed_form_and_unbounded_qp_agree_on_random_instances() {
    let mut r = rng::stream(11, 0);
    let mut worst = 0.0_f64;
    for k in 0..50 {
        let m = 2 + k % 7;
        let sigma = random_spd(m, 0.05, &mut r);
        let mu = random_vector(m, 1.0, &mut r);
        let target = mu.mean() + 0.3 * common::normal(&mut r);
        let a = markowitz_closed_form(&mu, &sigma, target).unwrap();
        let b = markowitz_qp(&mu, &sigma, target, &Bounds::unbounded(m)).unwrap();
        worst = worst.max((a.w - b.w).amax());
    }
    assert!(worst <= 1e-7, "max |Δw| = {worst:e}");
}

#[test]
fn long_only_qp_matches_segment_grid() {
    // Feasible set of a 3-asset simplex problem with a mean constraint is a
    // segment; walk it with w1 on a 0.005 grid.
    let mu = v(&[0.05, 0.08, 0.12]);
    let sigma = Matrix::from_row_slice(3, 3, &[0.04, 0.006, 0.01, 0.006, 0.09, 0.02, 0.01, 0.02, 0.16]);
    for target in [0.06, 0.08, 0.1, 0.115] {
        let w = markowitz_qp(&mu, &sigma, target, &Bounds::long_only(3)).unwrap();
        let qp_var = quad(&sigma, &w.w);
        let mut best = f64::INFINITY;
        for i in 0..=200 {
            let w1 = i as f64 * 0.005;
            // w2 + w3 = 1 - w1, 0.08 w2 + 0.12 w3 = target - 0.05 w1
            let w3 = (target - mu[0] * w1 - mu[1] * (1.0 - w1)) / (mu[2] - mu[1]);
            let w2 = 1.0 - w1 - w3;
            if w2 < 0.0 || w3 < 0.0 {
                continue;
            }
            best = best.min(quad(&sigma, &v(&[w1, w2, w3])));
        }
        assert!(qp_var <= best + 1e-12, "target {target}: qp {qp_var} grid {best}");
        assert!(best - qp_var <= 1e-5, "target {target}: qp {qp_var} grid {best}");
    }
}

#[test]
fn freq1_frontier_spans_two_to_max_mean() {
    let (mu, sigma) = Scenario::freq(1).truth().unwrap();
    let max_mu = mu.max();
    assert_eq!(max_mu, 3.47);
    let targets = linspace(2.0, max_mu, 60);
    let f = efficient_frontier(&mu, &sigma, &targets, &Bounds::long_only(4));
    assert!(f.skipped.is_empty(), "{:?}", f.skipped);
    let lo = f.points.first().unwrap().mu;
    let hi = f.points.last().unwrap().mu;
    assert!((lo - 2.0).abs() < 1e-9 && (hi - 3.47).abs() < 1e-9);
    let beyond = efficient_frontier(&mu, &sigma, &[3.5], &Bounds::long_only(4));
    assert!(matches!(beyond.skipped[0].1, Error::TargetInfeasible { .. }));
}

#[test]
fn frontier_volatility_is_convex_and_gmv_is_lowest() {
    let (mu, sigma) = Scenario::freq(1).truth().unwrap();
    let gmv = frontier::global_minimum_variance(&sigma).unwrap();
    let gmv_mu = gmv.mean(&mu);
    let targets = linspace(gmv_mu, 3.4, 40);
    let f = efficient_frontier(&mu, &sigma, &targets, &Bounds::unbounded(4));
    let s: Vec<f64> = f.points.iter().map(|p| p.sigma).collect();
    for k in 1..s.len() - 1 {
        assert!(s[k - 1] + s[k + 1] - 2.0 * s[k] >= -1e-12);
    }
    let gmv_sigma = gmv.volatility(&sigma);
    assert!(s.iter().all(|&x| x >= gmv_sigma - 1e-12));
    assert!((s[0] - gmv_sigma).abs() < 1e-9);
}

fn seeded_panel() -> ReturnsPanel {
    let (mu, sigma) = Scenario::freq(1).truth().unwrap();
    common::normal_panel(&(mu / 100.0), &(sigma / 1e4), 6, 5)
}

#[test]
fn resampling_identical_rows_gives_plug_in() {
    let panel = seeded_panel();
    let ident: Vec<usize> = (0..6).collect();
    let r = resampled_weights_from_indices(&panel, 0.025, &[ident], &Bounds::long_only(4)).unwrap();
    let est = MomentEstimate::from_data(panel.data());
    let plug = frontier::markowitz_with_policy(
        &est.mean,
        &est.cov,
        0.025,
        &Bounds::long_only(4),
        &InfeasiblePolicy::TargetReplacement,
    )
    .unwrap();
    assert!((r.weights.w - plug.weights.w).amax() < 1e-15);
}

#[test]
fn resampling_constant_panel() {
    let row = [0.01, 0.02, 0.03];
    let panel = ReturnsPanel::from_rows(&[&row, &row, &row, &row]).unwrap();
    // Every replicate sees the same zero covariance, so every replicate
    // returns the same weights.
    let r = resampled_weights(&panel, 0.02, 20, &Bounds::long_only(3), 3).unwrap();
    let one = resampled_weights_from_indices(&panel, 0.02, &[vec![0, 1, 2, 3]], &Bounds::long_only(3)).unwrap();
    assert!((r.weights.w - one.weights.w).amax() < 1e-12);
}

#[test]
fn resampled_weights_match_independent_loop() {
    let panel = seeded_panel();
    let seed = 77;
    let target = 0.03;
    let r = resampled_weights(&panel, target, 500, &Bounds::long_only(4), seed).unwrap();
    assert!(r.weights.w.iter().all(|&x| (-1e-12..=1.0 + 1e-12).contains(&x)));
    assert!(
        (r.weights.w.sum() - 1.0).abs() < 1e-12,
        "{:e} {:?}",
        r.weights.w.sum() - 1.0,
        (r.replaced, r.failed)
    );

    // Second implementation: explicit row draws, hand-rolled moments, direct
    // QP with the replacement rule spelled out.
    let n = panel.n_periods();
    let data = panel.data();
    let mut sum = Vector::zeros(4);
    let mut count = 0.0;
    for b in 0..500u64 {
        let mut stream = rng::stream(seed, b);
        let idx = rng::resample_indices(&mut stream, n);
        let mut mean = Vector::zeros(4);
        for &i in &idx {
            mean += data.row(i).transpose();
        }
        mean /= n as f64;
        let mut cov = Matrix::zeros(4, 4);
        for &i in &idx {
            let d = data.row(i).transpose() - &mean;
            cov += &d * d.transpose();
        }
        cov /= n as f64;
        let max_mean = mean.max();
        let min_mean = mean.min();
        let t = target.clamp(min_mean, max_mean);
        let p = qp::QpProblem::with_budget(&cov * 2.0, Vector::zeros(4))
            .simplex_bounds()
            .equality(&mean, t);
        let sol = qp::solve_qp(&p).unwrap().into_result().unwrap();
        sum += sol.w;
        count += 1.0;
    }
    let oracle = sum / count;
    let gap = (&r.weights.w - &oracle).amax();
    assert!(gap < 1e-12, "{gap:e}");
}

#[test]
fn resampling_is_deterministic() {
    let panel = seeded_panel();
    let a = resampled_weights(&panel, 0.03, 50, &Bounds::long_only(4), 9).unwrap();
    let b = resampled_weights(&panel, 0.03, 50, &Bounds::long_only(4), 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn active_qp_matches_grid_over_polytope() {
    let mu = v(&[0.01, 0.015, 0.022]);
    let sigma = Matrix::from_row_slice(3, 3, &[0.04, 0.006, 0.01, 0.006, 0.09, 0.02, 0.01, 0.02, 0.16]);
    let wb = v(&[0.3, 0.3, 0.4]);
    let mut c = ActiveConstraints::new(wb.clone(), 0.002);
    c.cap = 0.6;
    let w = frontier::active_qp(&mu, &sigma, &c).unwrap();
    let tilt = &w.w - &wb;
    let obj = quad(&sigma, &tilt);
    // Feasible tilts: t1 on a grid, t2 and t3 from the two equalities.
    let mut best = f64::INFINITY;
    for i in 0..=400 {
        let t1 = -0.3 + i as f64 * 0.005;
        let t3 = (0.002 - mu[0] * t1 + mu[1] * t1) / (mu[2] - mu[1]);
        let t2 = -t1 - t3;
        let t = v(&[t1, t2, t3]);
        let total = &wb + &t;
        if total.iter().any(|&x| x < -1e-12 || x > 0.6 + 1e-12) {
            continue;
        }
        best = best.min(quad(&sigma, &t));
    }
    assert!(obj <= best + 1e-12 && best - obj <= 1e-5, "qp {obj} grid {best}");
    assert!(w.w.iter().all(|&x| x >= -1e-10 && x <= 0.6 + 1e-10));
    assert!((w.w.sum() - 1.0).abs() < 1e-10);
}

#[test]
fn active_cap_below_benchmark_weight_is_infeasible_for_large_targets() {
    let mu = v(&[0.01, 0.02, 0.03]);
    let wb = v(&[0.6, 0.2, 0.2]);
    let c = ActiveConstraints::new(wb, 0.5);
    let r = frontier::active_qp(&mu, &Matrix::identity(3, 3), &c);
    assert!(matches!(r, Err(Error::TargetInfeasible { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bounded_weights_satisfy_constraints(seed in 0u64..10_000, m in 2usize..7, frac in 0.0f64..1.0) {
        let mut r = rng::stream(seed, 1);
        let sigma = random_spd(m, 0.01, &mut r);
        let mu = random_vector(m, 1.0, &mut r);
        let target = mu.min() + frac * (mu.max() - mu.min());
        let w = markowitz_qp(&mu, &sigma, target, &Bounds::long_only(m)).unwrap();
        prop_assert!((w.w.sum() - 1.0).abs() < 1e-8);
        prop_assert!((w.w.dot(&mu) - target).abs() < 1e-8);
        prop_assert!(w.w.iter().all(|&x| x >= -1e-8 && x <= 1.0 + 1e-8));
    }

    #[test]
    fn closed_form_meets_both_equalities(seed in 0u64..10_000, m in 2usize..9, target in -2.0f64..2.0) {
        let mut r = rng::stream(seed, 2);
        let sigma = random_spd(m, 0.05, &mut r);
        let mu = random_vector(m, 1.0, &mut r);
        let w = markowitz_closed_form(&mu, &sigma, target).unwrap();
        prop_assert!((w.w.sum() - 1.0).abs() < 1e-8);
        prop_assert!((w.w.dot(&mu) - target).abs() < 1e-8);
    }
}
