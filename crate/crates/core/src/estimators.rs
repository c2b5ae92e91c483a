//! Mean and covariance estimators beyond the sample moments: the
//! normal/inverted-Wishart conjugate posterior, Ledoit-Wolf shrinkage toward
//! a constant-correlation target, and the Black-Litterman mean.

use alloc::format;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::moments::{MomentEstimate, ReturnsPanel};

/// Hyperparameters of `μ | Σ ~ N(ν, Σ/κ)`, `Σ ~ IW_m(Ψ, n₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwPrior {
    pub nu: Vector,
    pub kappa: f64,
    pub n0: f64,
    pub psi: Matrix,
}

impl NiwPrior {
    pub fn new(nu: Vector, kappa: f64, n0: f64, psi: Matrix) -> Result<Self> {
        let prior = Self { nu, kappa, n0, psi };
        prior.validate()?;
        Ok(prior)
    }

    pub fn dim(&self) -> usize {
        self.nu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.dim();
        if self.psi.shape() != (m, m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: self.psi.nrows(),
            });
        }
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        if !(self.n0 > m as f64 + 1.0) {
            return Err(Error::InvalidParameter(format!(
                "n0 = {} must exceed m + 1 = {}",
                self.n0,
                m + 1
            )));
        }
        if !linalg::is_symmetric(&self.psi, 1e-10 * self.psi.amax().max(1.0))
            || !linalg::is_positive_definite(&self.psi)
        {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(())
    }

    /// Prior mean of `Σ`, `Ψ / (n₀ - m - 1)`.
    pub fn mean_sigma(&self) -> Matrix {
        &self.psi / (self.n0 - self.dim() as f64 - 1.0)
    }
}

/// Posterior `μ | Σ ~ N(mean, Σ/kappa_post)`,
/// `Σ ~ IW_m((dof_post - m - 1) sigma_hat, dof_post)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwPosterior {
    pub mean: Vector,
    /// Posterior mean of `Σ`.
    pub sigma_hat: Matrix,
    pub kappa_post: f64,
    pub dof_post: f64,
}

impl NiwPosterior {
    /// Scale matrix of the inverted-Wishart posterior.
    pub fn iw_scale(&self) -> Matrix {
        &self.sigma_hat * (self.dof_post - self.mean.len() as f64 - 1.0)
    }
}

/// Conjugate update of `prior` with the rows of `panel`.
pub fn niw_update(prior: &NiwPrior, panel: &ReturnsPanel) -> Result<NiwPosterior> {
    if panel.n_assets() != prior.dim() {
        return Err(Error::DimensionMismatch {
            expected: prior.dim(),
            found: panel.n_assets(),
        });
    }
    if panel.n_periods() == 0 {
        return Err(Error::PanelTooSmall { rows: 0, min: 1 });
    }
    Ok(niw_update_moments(prior, &MomentEstimate::from_data(panel.data())))
}

/// Conjugate update from precomputed sample moments (`cov` with divisor n).
pub fn niw_update_moments(prior: &NiwPrior, sample: &MomentEstimate) -> NiwPosterior {
    let m = prior.dim() as f64;
    let n = sample.n_obs as f64;
    let kappa = prior.kappa;
    let w_prior = kappa / (n + kappa);
    let mean = &prior.nu * w_prior + &sample.mean * (n / (n + kappa));
    let dev = &sample.mean - &prior.nu;
    let denom = n + prior.n0 - m - 1.0;
    let adjusted = &sample.cov + (&dev * dev.transpose()) * w_prior;
    let sigma_hat = &prior.psi / denom + adjusted * (n / denom);
    NiwPosterior {
        mean,
        sigma_hat: linalg::symmetrize(&sigma_hat),
        kappa_post: n + kappa,
        dof_post: n + prior.n0,
    }
}

/// Posterior predictive mean and second moment of the next return:
/// `μ_n = mean`, `V_n = (1 + 1/kappa_post) sigma_hat + μ_n μ_nᵀ`.
pub fn niw_predictive_moments(post: &NiwPosterior) -> Result<(Vector, Matrix)> {
    let m = post.mean.len() as f64;
    if !(post.dof_post > m + 1.0) {
        return Err(Error::DegreesOfFreedomTooSmall {
            dof: post.dof_post,
            min: m + 1.0,
        });
    }
    let predictive_cov = &post.sigma_hat * (1.0 + 1.0 / post.kappa_post);
    let v = predictive_cov + &post.mean * post.mean.transpose();
    Ok((post.mean.clone(), linalg::symmetrize(&v)))
}

/// Shrinkage of the sample covariance toward a constant-correlation target.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrunkCovariance {
    pub sigma: Matrix,
    /// Shrinkage intensity actually applied, in `[0, 1]`.
    pub delta: f64,
    /// Unclipped estimate of the optimal intensity.
    pub raw_delta: f64,
    pub clipped: bool,
    pub target: Matrix,
    pub sample: Matrix,
}

/// Ledoit-Wolf shrinkage toward the constant-correlation matrix
/// `F_ij = r̄ √(s_ii s_jj)`, with the asymptotically optimal intensity
/// `δ̂ = (π̂ - ρ̂) / (γ̂ T)` clipped to `[0, 1]`.
pub fn ledoit_wolf_constant_corr(panel: &ReturnsPanel) -> Result<ShrunkCovariance> {
    let (t, m) = panel.data().shape();
    if t < 3 {
        return Err(Error::PanelTooSmall { rows: t, min: 3 });
    }
    if m < 2 {
        return Err(Error::InvalidParameter("shrinkage needs at least two assets".into()));
    }
    let x = panel.data();
    let means: Vector = x.row_mean().transpose();
    let mut y = x.clone();
    for j in 0..m {
        for i in 0..t {
            y[(i, j)] -= means[j];
        }
    }
    let tf = t as f64;
    let sample = (y.transpose() * &y) / tf;
    let sd: Vector = sample.diagonal().map(libm::sqrt);

    let mut corr_sum = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                corr_sum += sample[(i, j)] / (sd[i] * sd[j]);
            }
        }
    }
    let rbar = corr_sum / (m * (m - 1)) as f64;
    let mut target = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            target[(i, j)] = if i == j { sample[(i, i)] } else { rbar * sd[i] * sd[j] };
        }
    }

    // π̂: sum of asymptotic variances of the sample covariance entries.
    let y2 = y.map(|v| v * v);
    let pi_mat = (y2.transpose() * &y2) / tf - sample.map(|s| s * s);
    let pi_hat = pi_mat.sum();

    // ρ̂: asymptotic covariances between target and sample entries.
    let mut rho_hat = 0.0;
    for i in 0..m {
        rho_hat += pi_mat[(i, i)];
    }
    // θ_ii,ij = (1/T) Σ_t (y_ti² - s_ii)(y_ti y_tj - s_ij)
    let cross = (y.map(|v| v * v * v).transpose() * &y) / tf;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let theta_ii_ij = cross[(i, j)] - sample[(i, i)] * sample[(i, j)];
            let theta_jj_ij = cross[(j, i)] - sample[(j, j)] * sample[(i, j)];
            rho_hat += 0.5 * rbar * ((sd[j] / sd[i]) * theta_ii_ij + (sd[i] / sd[j]) * theta_jj_ij);
        }
    }

    let gamma_hat = (&target - &sample).map(|d| d * d).sum();
    let raw_delta = if gamma_hat > 0.0 {
        (pi_hat - rho_hat) / gamma_hat / tf
    } else {
        f64::INFINITY
    };
    let delta = raw_delta.clamp(0.0, 1.0);
    let clipped = delta != raw_delta;
    let sigma = &target * delta + &sample * (1.0 - delta);
    Ok(ShrunkCovariance {
        sigma: linalg::symmetrize(&sigma),
        delta,
        raw_delta,
        clipped,
        target,
        sample,
    })
}

/// Black-Litterman views `P μ ~ N(q, Ω)` with the market prior
/// `π - μ ~ N(0, τΣ)` and `π = 2 λ Σ w̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlViews {
    pub pick: Matrix,
    pub q: Vector,
    /// Diagonal of `Ω`.
    pub omega: Vector,
    pub tau: f64,
    pub market_lambda: f64,
    pub benchmark_weights: Vector,
}

impl BlViews {
    pub const DEFAULT_MARKET_LAMBDA: f64 = 1.2;

    pub fn new(pick: Matrix, q: Vector, omega: Vector, tau: f64, benchmark_weights: Vector) -> Result<Self> {
        let views = Self {
            pick,
            q,
            omega,
            tau,
            market_lambda: Self::DEFAULT_MARKET_LAMBDA,
            benchmark_weights,
        };
        views.validate()?;
        Ok(views)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.pick.nrows();
        if self.q.len() != p || self.omega.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: self.q.len().min(self.omega.len()),
            });
        }
        if self.pick.ncols() != self.benchmark_weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.pick.ncols(),
                found: self.benchmark_weights.len(),
            });
        }
        if self.omega.iter().any(|&o| !(o > 0.0)) {
            return Err(Error::InvalidParameter("view variances must be positive".into()));
        }
        if self.pick.row_iter().any(|r| r.iter().all(|&v| v == 0.0)) {
            return Err(Error::InvalidParameter("pick matrix has a zero row".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParameter("tau must be positive".into()));
        }
        Ok(())
    }

    /// Equilibrium returns `π = 2 λ Σ w̃`.
    pub fn equilibrium_returns(&self, sigma: &Matrix) -> Vector {
        sigma * &self.benchmark_weights * (2.0 * self.market_lambda)
    }
}

/// Black-Litterman mean and its covariance `[(τΣ)⁻¹ + PᵀΩ⁻¹P]⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlackLitterman {
    pub mean: Vector,
    pub cov: Matrix,
    pub equilibrium: Vector,
}

pub fn black_litterman(sigma: &Matrix, views: &BlViews) -> Result<BlackLitterman> {
    views.validate()?;
    let m = views.benchmark_weights.len();
    if sigma.shape() != (m, m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: sigma.nrows(),
        });
    }
    let prior_precision = linalg::spd_inverse(&(sigma * views.tau))?;
    let omega_inv = Matrix::from_diagonal(&views.omega.map(|o| 1.0 / o));
    let pt_omega_inv = views.pick.transpose() * &omega_inv;
    let precision = linalg::symmetrize(&(&prior_precision + &pt_omega_inv * &views.pick));
    let pi = views.equilibrium_returns(sigma);
    let rhs = &prior_precision * &pi + &pt_omega_inv * &views.q;
    let chol = linalg::cholesky(&precision).ok_or(Error::SingularPrecision)?;
    let mean = chol.solve(&rhs);
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularPrecision);
    }
    Ok(BlackLitterman {
        mean,
        cov: chol.inverse(),
        equilibrium: pi,
    })
}

/// Black-Litterman estimate of the mean.
pub fn black_litterman_mean(sigma: &Matrix, views: &BlViews) -> Result<Vector> {
    black_litterman(sigma, views).map(|bl| bl.mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use alloc::vec::Vec;
    use rand_distr::{Distribution, StandardNormal};

    fn panel(t: usize, m: usize, seed: u64) -> ReturnsPanel {
        let mut r = rng::stream(seed, 1);
        let v: Vec<f64> = (0..t * m)
            .map(|k| {
                let z: f64 = StandardNormal.sample(&mut r);
                0.01 * (k % m) as f64 + 0.04 * z
            })
            .collect();
        ReturnsPanel::from_matrix(Matrix::from_row_slice(t, m, &v)).unwrap()
    }

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn toy_prior(m: usize) -> NiwPrior {
        let mut psi = Matrix::identity(m, m) * 0.02;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    psi[(i, j)] = 0.005;
                }
            }
        }
        NiwPrior::new(Vector::from_element(m, 0.01), 5.0, m as f64 + 6.0, psi).unwrap()
    }

    #[test]
    fn dogmatic_prior_pins_the_mean() {
        let mut prior = toy_prior(3);
        prior.kappa = 1e12;
        let post = niw_update(&prior, &panel(10, 3, 2)).unwrap();
        assert!((&post.mean - &prior.nu).amax() < 1e-6);
    }

    #[test]
    fn single_observation_is_convex_combination() {
        let prior = toy_prior(2);
        let p = ReturnsPanel::from_rows(&[&[0.05, -0.02]]).unwrap();
        let post = niw_update(&prior, &p).unwrap();
        let expected = (&prior.nu * prior.kappa + v(&[0.05, -0.02])) / (1.0 + prior.kappa);
        assert!((post.mean - expected).amax() < 1e-15);
    }

    #[test]
    fn update_rejects_wrong_width() {
        let prior = toy_prior(3);
        assert!(matches!(
            niw_update(&prior, &panel(5, 2, 1)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn prior_validation() {
        assert!(NiwPrior::new(v(&[0.0, 0.0]), 1.0, 3.0, Matrix::identity(2, 2)).is_err());
        assert!(NiwPrior::new(v(&[0.0, 0.0]), 0.0, 5.0, Matrix::identity(2, 2)).is_err());
        assert!(NiwPrior::new(v(&[0.0, 0.0]), 1.0, 5.0, Matrix::identity(2, 2)).is_ok());
    }

    #[test]
    fn predictive_scalar_formula() {
        let post = NiwPosterior {
            mean: v(&[0.3]),
            sigma_hat: Matrix::from_element(1, 1, 0.04),
            kappa_post: 4.0,
            dof_post: 10.0,
        };
        let (mu, vn) = niw_predictive_moments(&post).unwrap();
        assert_eq!(mu[0], 0.3);
        assert!((vn[(0, 0)] - (1.25 * 0.04 + 0.09)).abs() < 1e-15);
    }

    #[test]
    fn predictive_limit_and_dof_guard() {
        let post = NiwPosterior {
            mean: v(&[0.1, 0.2]),
            sigma_hat: Matrix::identity(2, 2),
            kappa_post: 1e15,
            dof_post: 10.0,
        };
        let (mu, vn) = niw_predictive_moments(&post).unwrap();
        let cov = vn - &mu * mu.transpose();
        assert!((cov - Matrix::identity(2, 2)).amax() < 1e-12);
        let bad = NiwPosterior { dof_post: 3.0, ..post };
        assert!(matches!(
            niw_predictive_moments(&bad),
            Err(Error::DegreesOfFreedomTooSmall { .. })
        ));
    }

    #[test]
    fn equal_correlations_are_a_fixed_point() {
        // Two assets: the average correlation is the only correlation.
        let lw = ledoit_wolf_constant_corr(&panel(40, 2, 9)).unwrap();
        assert!((lw.sigma - lw.sample).amax() < 1e-15);
    }

    #[test]
    fn shrinkage_is_psd_and_clipped_into_unit_interval() {
        let lw = ledoit_wolf_constant_corr(&panel(120, 10, 4)).unwrap();
        assert!((0.0..=1.0).contains(&lw.delta));
        assert!(linalg::sym_eigenvalues(&lw.sigma)[0] > -1e-10);
        assert!(ledoit_wolf_constant_corr(&panel(2, 3, 1)).is_err());
    }

    #[test]
    fn uninformative_views_return_equilibrium() {
        let sigma = Matrix::from_row_slice(3, 3, &[0.04, 0.01, 0.0, 0.01, 0.09, 0.02, 0.0, 0.02, 0.16]);
        let mut views = BlViews::new(
            Matrix::from_row_slice(1, 3, &[1.0, -1.0, 0.0]),
            v(&[0.05]),
            v(&[1e12]),
            0.05,
            v(&[0.5, 0.3, 0.2]),
        )
        .unwrap();
        views.market_lambda = 1.2;
        let mu = black_litterman_mean(&sigma, &views).unwrap();
        let pi = views.equilibrium_returns(&sigma);
        for i in 0..3 {
            assert!(((mu[i] - pi[i]) / pi[i]).abs() < 1e-4);
        }
    }

    #[test]
    fn agreeing_views_are_a_fixed_point() {
        let sigma = Matrix::from_diagonal(&v(&[0.04, 0.09]));
        let w = v(&[0.6, 0.4]);
        let pi = &sigma * &w * 2.4;
        let views = BlViews::new(
            Matrix::identity(2, 2),
            pi.clone(),
            v(&[0.05 * 0.04, 0.05 * 0.09]),
            0.05,
            w,
        )
        .unwrap();
        let mu = black_litterman_mean(&sigma, &views).unwrap();
        assert!((mu - pi).amax() < 1e-14);
    }

    #[test]
    fn two_asset_single_view_matches_direct_solve() {
        // Oracle: solve the 2×2 normal equations with Cramer's rule.
        let sigma = Matrix::from_row_slice(2, 2, &[0.04, 0.006, 0.006, 0.09]);
        let tau = 0.05;
        let w = v(&[0.7, 0.3]);
        let views = BlViews::new(
            Matrix::from_row_slice(1, 2, &[1.0, -1.0]),
            v(&[0.02]),
            v(&[0.0004]),
            tau,
            w.clone(),
        )
        .unwrap();
        let mu = black_litterman_mean(&sigma, &views).unwrap();

        let (a, b, d) = (sigma[(0, 0)] * tau, sigma[(0, 1)] * tau, sigma[(1, 1)] * tau);
        let det = a * d - b * b;
        let (ia, ib, id) = (d / det, -b / det, a / det);
        let pi0 = 2.4 * (sigma[(0, 0)] * w[0] + sigma[(0, 1)] * w[1]);
        let pi1 = 2.4 * (sigma[(1, 0)] * w[0] + sigma[(1, 1)] * w[1]);
        let om = 1.0 / 0.0004;
        let (pa, pb, pd) = (ia + om, ib - om, id + om);
        let r0 = ia * pi0 + ib * pi1 + om * 0.02;
        let r1 = ib * pi0 + id * pi1 - om * 0.02;
        let pdet = pa * pd - pb * pb;
        let x0 = (pd * r0 - pb * r1) / pdet;
        let x1 = (pa * r1 - pb * r0) / pdet;
        assert!((mu[0] - x0).abs() < 1e-10 && (mu[1] - x1).abs() < 1e-10);
    }

    #[test]
    fn view_validation() {
        assert!(BlViews::new(
            Matrix::from_row_slice(1, 2, &[0.0, 0.0]),
            v(&[0.0]),
            v(&[1.0]),
            0.05,
            v(&[0.5, 0.5])
        )
        .is_err());
        assert!(BlViews::new(
            Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            v(&[0.0]),
            v(&[-1.0]),
            0.05,
            v(&[0.5, 0.5])
        )
        .is_err());
    }
}
