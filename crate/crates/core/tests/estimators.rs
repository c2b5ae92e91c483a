mod common;

use common::{normal, normal_panel, random_spd, v};
use mvopt_core::estimators::{
    black_litterman_mean, ledoit_wolf_constant_corr, niw_predictive_moments, niw_update, BlViews, NiwPosterior,
    NiwPrior,
};
use mvopt_core::simlab::prior_m4;
use mvopt_core::{rng, Matrix, ReturnsPanel, Vector};
use proptest::prelude::*;

type Plain = Vec<Vec<f64>>;

fn rows_of(p: &ReturnsPanel) -> Plain {
    (0..p.n_periods())
        .map(|t| p.data().row(t).iter().copied().collect())
        .collect()
}

fn plain(a: &Matrix) -> Plain {
    (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect()
}

/// Posterior mean and Σ̂ of the normal/inverted-Wishart model, transcribed
/// term by term.
fn niw_oracle(nu: &[f64], kappa: f64, n0: f64, psi: &Plain, rows: &Plain) -> (Vec<f64>, Plain) {
    let n = rows.len() as f64;
    let m = nu.len();
    let mf = m as f64;
    let mut rbar = vec![0.0; m];
    for r in rows {
        for i in 0..m {
            rbar[i] += r[i] / n;
        }
    }
    let mean: Vec<f64> = (0..m)
        .map(|i| kappa / (n + kappa) * nu[i] + n / (n + kappa) * rbar[i])
        .collect();
    let mut sigma = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            let prior_part = (n0 - mf - 1.0) / (n + n0 - mf - 1.0) * psi[i][j] / (n0 - mf - 1.0);
            let mut s = 0.0;
            for r in rows {
                s += (r[i] - rbar[i]) * (r[j] - rbar[j]);
            }
            let brace = s / n + kappa / (n + kappa) * (rbar[i] - nu[i]) * (rbar[j] - nu[j]);
            sigma[i][j] = prior_part + n / (n + n0 - mf - 1.0) * brace;
        }
    }
    (mean, sigma)
}

/// Constant-correlation shrinkage transcribed from the reference
/// implementation of Ledoit and Wolf (demeaned data, divisor T).
fn ledoit_wolf_oracle(rows: &Plain) -> (Plain, f64) {
    let t = rows.len();
    let n = rows[0].len();
    let tf = t as f64;
    let mut mean = vec![0.0; n];
    for r in rows {
        for j in 0..n {
            mean[j] += r[j] / tf;
        }
    }
    let x: Plain = rows.iter().map(|r| (0..n).map(|j| r[j] - mean[j]).collect()).collect();
    let mut sample = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            sample[i][j] = (0..t).map(|k| x[k][i] * x[k][j]).sum::<f64>() / tf;
        }
    }
    let var: Vec<f64> = (0..n).map(|i| sample[i][i]).collect();
    let sqrtvar: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    let mut all = 0.0;
    for i in 0..n {
        for j in 0..n {
            all += sample[i][j] / (sqrtvar[i] * sqrtvar[j]);
        }
    }
    let rbar = (all - n as f64) / (n * (n - 1)) as f64;
    let mut prior = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            prior[i][j] = if i == j { var[i] } else { rbar * sqrtvar[i] * sqrtvar[j] };
        }
    }
    let mut phi_mat = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let yy = (0..t).map(|k| x[k][i].powi(2) * x[k][j].powi(2)).sum::<f64>() / tf;
            let xx = (0..t).map(|k| x[k][i] * x[k][j]).sum::<f64>();
            phi_mat[i][j] = yy - 2.0 * xx * sample[i][j] / tf + sample[i][j].powi(2);
        }
    }
    let phi: f64 = phi_mat.iter().flatten().sum();
    let mut theta = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let term1 = (0..t).map(|k| x[k][i].powi(3) * x[k][j]).sum::<f64>() / tf;
            let help_ij = (0..t).map(|k| x[k][i] * x[k][j]).sum::<f64>() / tf;
            let help_ii = (0..t).map(|k| x[k][i] * x[k][i]).sum::<f64>() / tf;
            let term2 = help_ii * sample[i][j];
            let term3 = help_ij * var[i];
            let term4 = var[i] * sample[i][j];
            theta[i][j] = term1 - term2 - term3 + term4;
        }
    }
    let mut rho: f64 = (0..n).map(|i| phi_mat[i][i]).sum();
    let mut off = 0.0;
    for i in 0..n {
        for j in 0..n {
            off += sqrtvar[j] / sqrtvar[i] * theta[i][j];
        }
    }
    rho += rbar * off;
    let mut gamma = 0.0;
    for i in 0..n {
        for j in 0..n {
            gamma += (sample[i][j] - prior[i][j]).powi(2);
        }
    }
    let kappa = (phi - rho) / gamma;
    let shrinkage = (kappa / tf).clamp(0.0, 1.0);
    let sigma = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| shrinkage * prior[i][j] + (1.0 - shrinkage) * sample[i][j])
                .collect()
        })
        .collect();
    (sigma, shrinkage)
}

fn min_eigenvalue(a: &Matrix) -> f64 {
    a.clone().symmetric_eigen().eigenvalues.min()
}

fn seeded_panel(t: usize, m: usize, seed: u64) -> ReturnsPanel {
    let mut r = rng::stream(seed, 3);
    let f = Vector::from_fn(t, |_, _| normal(&mut r));
    let data = Matrix::from_fn(t, m, |i, j| {
        0.005 * j as f64 + 0.03 * f[i] * (1.0 + 0.1 * j as f64) + 0.04 * normal(&mut r)
    });
    ReturnsPanel::from_matrix(data).unwrap()
}

fn simple_views(m: usize) -> BlViews {
    let mut pick = Matrix::zeros(2, m);
    pick[(0, 0)] = 1.0;
    pick[(0, 1)] = -1.0;
    pick[(1, m - 1)] = 1.0;
    BlViews::new(
        pick,
        v(&[0.02, 0.05]),
        v(&[0.001, 0.002]),
        0.05,
        Vector::from_element(m, 1.0 / m as f64),
    )
    .unwrap()
}

#[test]
fn posterior_matches_formula_oracle() {
    let prior = prior_m4();
    let panel = normal_panel(&prior.nu, &prior.mean_sigma(), 6, 2024);
    let post = niw_update(&prior, &panel).unwrap();
    let nu: Vec<f64> = prior.nu.iter().copied().collect();
    let (mean, sigma) = niw_oracle(&nu, prior.kappa, prior.n0, &plain(&prior.psi), &rows_of(&panel));
    for i in 0..4 {
        assert!((post.mean[i] - mean[i]).abs() < 1e-10);
        for j in 0..4 {
            assert!((post.sigma_hat[(i, j)] - sigma[i][j]).abs() < 1e-10, "({i},{j})");
        }
    }
    assert_eq!(post.kappa_post, 11.0);
    assert_eq!(post.dof_post, 16.0);
    assert!((post.iw_scale() - &post.sigma_hat * 11.0).amax() < 1e-12);
}

#[test]
fn dogmatic_prior_pins_the_mean() {
    let mut prior = prior_m4();
    prior.kappa = 1e12;
    let panel = normal_panel(&(&prior.nu * 3.0), &prior.mean_sigma(), 20, 1);
    let post = niw_update(&prior, &panel).unwrap();
    assert!((post.mean - &prior.nu).amax() < 1e-6);
}

#[test]
fn single_observation_is_a_convex_combination() {
    let prior = prior_m4();
    let r1 = [1.0, -2.0, 0.5, 4.0];
    let panel = ReturnsPanel::unrestricted_matrix(Matrix::from_row_slice(1, 4, &r1)).unwrap();
    let post = niw_update(&prior, &panel).unwrap();
    for i in 0..4 {
        let expected = (prior.kappa * prior.nu[i] + r1[i]) / (1.0 + prior.kappa);
        assert!((post.mean[i] - expected).abs() < 1e-14);
    }
}

#[test]
fn dimension_mismatch_is_rejected() {
    let prior = prior_m4();
    let panel = seeded_panel(10, 3, 0);
    assert!(matches!(
        niw_update(&prior, &panel),
        Err(mvopt_core::Error::DimensionMismatch { .. })
    ));
}

#[test]
fn posterior_mean_approaches_sample_mean_along_nested_panels() {
    let prior = prior_m4();
    let block = normal_panel(&(&prior.nu * -1.0), &prior.mean_sigma(), 5, 8);
    let rbar: Vector = block.data().row_mean().transpose();
    let mut prev = f64::INFINITY;
    for reps in 1..=40 {
        let mut data = Matrix::zeros(5 * reps, 4);
        for k in 0..reps {
            data.view_mut((5 * k, 0), (5, 4)).copy_from(block.data());
        }
        let panel = ReturnsPanel::unrestricted_matrix(data).unwrap();
        let post = niw_update(&prior, &panel).unwrap();
        let gap = (&post.mean - &rbar).norm();
        let n = (5 * reps) as f64;
        let expected = prior.kappa / (n + prior.kappa) * (&prior.nu - &rbar).norm();
        assert!((gap - expected).abs() < 1e-12);
        assert!(gap < prev);
        prev = gap;
    }
    assert!(prev < 0.05 * (&prior.nu - &rbar).norm());
}

#[test]
fn predictive_scalar_formula() {
    let post = NiwPosterior {
        mean: v(&[0.3]),
        sigma_hat: Matrix::from_element(1, 1, 4.0),
        kappa_post: 4.0,
        dof_post: 10.0,
    };
    let (mu, vn) = niw_predictive_moments(&post).unwrap();
    assert_eq!(mu[0], 0.3);
    assert!((vn[(0, 0)] - (1.25 * 4.0 + 0.09)).abs() < 1e-14);
}

#[test]
fn predictive_tends_to_sigma_hat_for_large_kappa() {
    let mut r = rng::stream(4, 0);
    let sigma_hat = random_spd(3, 0.1, &mut r);
    let post = NiwPosterior {
        mean: v(&[0.1, 0.2, 0.3]),
        sigma_hat: sigma_hat.clone(),
        kappa_post: 1e14,
        dof_post: 20.0,
    };
    let (mu, vn) = niw_predictive_moments(&post).unwrap();
    assert!((vn - &mu * mu.transpose() - sigma_hat).amax() < 1e-12);
}

#[test]
fn predictive_rejects_small_dof() {
    let post = NiwPosterior {
        mean: v(&[0.0, 0.0]),
        sigma_hat: Matrix::identity(2, 2),
        kappa_post: 3.0,
        dof_post: 3.0,
    };
    assert!(matches!(
        niw_predictive_moments(&post),
        Err(mvopt_core::Error::DegreesOfFreedomTooSmall { .. })
    ));
}

/// `Σ ~ IW(Ψ, k)` for integer `k` as the inverse of a sum of `k` outer
/// products of `N(0, Ψ⁻¹)` draws.
fn iw_by_outer_products(psi_inv_chol: &Matrix, k: usize, r: &mut impl rand::Rng) -> Matrix {
    let m = psi_inv_chol.nrows();
    let mut w = Matrix::zeros(m, m);
    for _ in 0..k {
        let x = psi_inv_chol * Vector::from_fn(m, |_, _| normal(r));
        w += &x * x.transpose();
    }
    w.try_inverse().unwrap()
}

#[test]
fn predictive_covariance_matches_hierarchical_simulation() {
    let prior = prior_m4();
    let panel = normal_panel(&prior.nu, &prior.mean_sigma(), 6, 77);
    let post = niw_update(&prior, &panel).unwrap();
    let (mu_n, vn) = niw_predictive_moments(&post).unwrap();
    let pred = &vn - &mu_n * mu_n.transpose();
    assert!(pred.clone().cholesky().is_some());

    let m = 4;
    let chol = post.iw_scale().try_inverse().unwrap().cholesky().unwrap().l();
    let mut r = rng::stream(99, 0);
    let draws = 200_000;
    let mut sum = Matrix::zeros(m, m);
    let mut sum_sq = Matrix::zeros(m, m);
    for _ in 0..draws {
        let sigma = iw_by_outer_products(&chol, post.dof_post as usize, &mut r);
        let ls = sigma.cholesky().unwrap().l();
        let mu = &post.mean + &ls * Vector::from_fn(m, |_, _| normal(&mut r)) / post.kappa_post.sqrt();
        let x = mu + &ls * Vector::from_fn(m, |_, _| normal(&mut r));
        let d = x - &mu_n;
        let p = &d * d.transpose();
        sum_sq += p.map(|z| z * z);
        sum += p;
    }
    let nf = draws as f64;
    let mean = &sum / nf;
    for i in 0..m {
        for j in 0..m {
            let var = sum_sq[(i, j)] / nf - mean[(i, j)].powi(2);
            let se = (var / nf).sqrt();
            let z = (mean[(i, j)] - pred[(i, j)]) / se;
            assert!(
                z.abs() < 3.0,
                "({i},{j}): mc {} closed form {} z {z}",
                mean[(i, j)],
                pred[(i, j)]
            );
        }
    }
}

#[test]
fn ledoit_wolf_matches_reference_transcription() {
    let panel = seeded_panel(120, 10, 31);
    let lw = ledoit_wolf_constant_corr(&panel).unwrap();
    let (sigma, delta) = ledoit_wolf_oracle(&rows_of(&panel));
    assert!((lw.delta - delta).abs() < 1e-10);
    assert!((0.0..=1.0).contains(&lw.delta));
    for i in 0..10 {
        for j in 0..10 {
            assert!((lw.sigma[(i, j)] - sigma[i][j]).abs() < 1e-10);
        }
    }
    assert!(min_eigenvalue(&lw.sigma) >= -1e-10);
}

#[test]
fn ledoit_wolf_two_assets_is_the_sample_covariance() {
    let panel = seeded_panel(30, 2, 2);
    let lw = ledoit_wolf_constant_corr(&panel).unwrap();
    assert!((&lw.sigma - &lw.sample).amax() < 1e-15);
    assert!((&lw.target - &lw.sample).amax() < 1e-15);
}

#[test]
fn ledoit_wolf_equal_correlations_are_a_fixed_point() {
    // Exchangeable rows: every pair has the same sample correlation.
    let base = [0.01, -0.02, 0.03, 0.0, -0.01, 0.02];
    let t = base.len();
    let m = 3;
    let mut data = Matrix::zeros(3 * t, m);
    for s in 0..m {
        for k in 0..t {
            for j in 0..m {
                data[(s * t + k, j)] = base[(k + t / m * ((j + s) % m)) % t];
            }
        }
    }
    let panel = ReturnsPanel::from_matrix(data).unwrap();
    let lw = ledoit_wolf_constant_corr(&panel).unwrap();
    let s = &lw.sample;
    let c01 = s[(0, 1)] / (s[(0, 0)] * s[(1, 1)]).sqrt();
    let c02 = s[(0, 2)] / (s[(0, 0)] * s[(2, 2)]).sqrt();
    let c12 = s[(1, 2)] / (s[(1, 1)] * s[(2, 2)]).sqrt();
    assert!((c01 - c02).abs() < 1e-12 && (c01 - c12).abs() < 1e-12);
    assert!((&lw.sigma - s).amax() < 1e-15);
}

#[test]
fn ledoit_wolf_rejects_tiny_panels() {
    assert!(ledoit_wolf_constant_corr(&seeded_panel(2, 3, 0)).is_err());
    assert!(ledoit_wolf_constant_corr(&seeded_panel(10, 1, 0)).is_err());
}

#[test]
fn black_litterman_uninformative_views_return_equilibrium() {
    let mut r = rng::stream(6, 0);
    let sigma = random_spd(4, 0.05, &mut r) * 0.01;
    let mut views = simple_views(4);
    views.omega = v(&[1e12, 1e12]);
    let mu = black_litterman_mean(&sigma, &views).unwrap();
    let pi = views.equilibrium_returns(&sigma);
    assert!((&mu - &pi).amax() <= 1e-4 * pi.amax());
    assert!((pi - &sigma * Vector::from_element(4, 0.25) * 2.4).amax() < 1e-15);
}

#[test]
fn black_litterman_agreeing_views_are_a_fixed_point() {
    let mut r = rng::stream(7, 0);
    let sigma = random_spd(3, 0.05, &mut r);
    let w = v(&[0.2, 0.5, 0.3]);
    let tau = 0.05;
    let pi = &sigma * &w * 2.4;
    let omega = sigma.diagonal() * tau;
    let views = BlViews::new(Matrix::identity(3, 3), pi.clone(), omega, tau, w).unwrap();
    let mu = black_litterman_mean(&sigma, &views).unwrap();
    assert!((mu - pi).amax() < 1e-12);
}

#[test]
fn black_litterman_two_assets_by_hand() {
    let sigma = Matrix::from_row_slice(2, 2, &[0.04, 0.006, 0.006, 0.09]);
    let tau = 0.05;
    let w = v(&[0.6, 0.4]);
    let pick = Matrix::from_row_slice(1, 2, &[1.0, -1.0]);
    let views = BlViews::new(pick, v(&[0.03]), v(&[0.0004]), tau, w).unwrap();
    let mu = black_litterman_mean(&sigma, &views).unwrap();

    // (τΣ)⁻¹ by the 2×2 adjugate, then Cramer's rule on the 2×2 system.
    let (a, b, d) = (tau * 0.04, tau * 0.006, tau * 0.09);
    let det = a * d - b * b;
    let prec = [[d / det, -b / det], [-b / det, a / det]];
    let pi = [2.4 * (0.04 * 0.6 + 0.006 * 0.4), 2.4 * (0.006 * 0.6 + 0.09 * 0.4)];
    let p = [1.0, -1.0];
    let om = 1.0 / 0.0004;
    let mut lhs = [[0.0; 2]; 2];
    let mut rhs = [0.0; 2];
    for i in 0..2 {
        for j in 0..2 {
            lhs[i][j] = prec[i][j] + p[i] * om * p[j];
            rhs[i] += prec[i][j] * pi[j];
        }
        rhs[i] += p[i] * om * 0.03;
    }
    let det2 = lhs[0][0] * lhs[1][1] - lhs[0][1] * lhs[1][0];
    let x0 = (rhs[0] * lhs[1][1] - lhs[0][1] * rhs[1]) / det2;
    let x1 = (lhs[0][0] * rhs[1] - rhs[0] * lhs[1][0]) / det2;
    assert!((mu[0] - x0).abs() < 1e-10);
    assert!((mu[1] - x1).abs() < 1e-10);
}

#[test]
fn black_litterman_rejects_bad_views() {
    let pick = Matrix::from_row_slice(1, 2, &[0.0, 0.0]);
    assert!(BlViews::new(pick, v(&[0.0]), v(&[0.1]), 0.05, v(&[0.5, 0.5])).is_err());
    let pick = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
    assert!(BlViews::new(pick, v(&[0.0]), v(&[-0.1]), 0.05, v(&[0.5, 0.5])).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ledoit_wolf_output_is_psd(t in 3usize..60, m in 2usize..8, seed in any::<u64>()) {
        let lw = ledoit_wolf_constant_corr(&seeded_panel(t, m, seed)).unwrap();
        prop_assert!((&lw.sigma - lw.sigma.transpose()).amax() == 0.0);
        prop_assert!(min_eigenvalue(&lw.sigma) >= -1e-10);
        prop_assert!((0.0..=1.0).contains(&lw.delta));
        prop_assert_eq!(lw.clipped, lw.delta != lw.raw_delta);
    }

    #[test]
    fn black_litterman_is_affine_in_q(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let mut r = rng::stream(seed, 0);
        let sigma = random_spd(4, 0.05, &mut r) * 0.01;
        let views = simple_views(4);
        let at = |q: Vector| {
            let mut vw = views.clone();
            vw.q = q;
            black_litterman_mean(&sigma, &vw).unwrap()
        };
        let q1 = v(&[0.03, -0.01]);
        let q2 = v(&[-0.02, 0.04]);
        let lhs = at(&q1 * a + &q2 * b);
        let rhs = at(q1) * a + at(q2) * b + at(v(&[0.0, 0.0])) * (1.0 - a - b);
        prop_assert!((lhs - rhs).amax() < 1e-10);
    }

    #[test]
    fn posterior_mean_interpolates_and_predictive_is_pd(n in 1usize..30, kappa in 0.1f64..50.0, seed in any::<u64>()) {
        let base = prior_m4();
        let prior = NiwPrior::new(base.nu.clone(), kappa, base.n0, base.psi.clone()).unwrap();
        let panel = normal_panel(&base.nu, &base.mean_sigma(), n, seed);
        let post = niw_update(&prior, &panel).unwrap();
        let rbar: Vector = panel.data().row_mean().transpose();
        let nf = n as f64;
        let expected = &prior.nu * (kappa / (nf + kappa)) + rbar * (nf / (nf + kappa));
        prop_assert!((&post.mean - expected).amax() < 1e-12);
        let (mu, vn) = niw_predictive_moments(&post).unwrap();
        prop_assert!((vn - &mu * mu.transpose()).cholesky().is_some());
        prop_assert!(post.sigma_hat.clone().cholesky().is_some());
    }
}
