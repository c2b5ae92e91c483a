//! Time-series working models for the predictive moments of next-period
//! returns: per-asset stochastic regressions with GARCH(1,1) errors, the
//! residual bootstrap used by NPEB under such models, and the Ljung-Box
//! test for residual autocorrelation.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::moments::{MomentEstimate, ReturnsPanel};
use crate::optimize::{nelder_mead, NelderMeadOptions};
use crate::{par, rng, special};

/// Least-squares AR(1) fit `e_t = α + γ e_{t-1} + ε_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ar1Fit {
    pub alpha: f64,
    pub gamma: f64,
    pub residuals: Vector,
    /// Mean squared residual.
    pub sigma2: f64,
}

pub fn fit_ar1(series: &[f64]) -> Result<Ar1Fit> {
    let t = series.len();
    if t < 4 {
        return Err(Error::SeriesTooShort { len: t, min: 4 });
    }
    let x = &series[..t - 1];
    let y = &series[1..];
    let n = (t - 1) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let scale: f64 = x.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    if sxx <= 1e-14 * scale {
        return Err(Error::DegenerateRegressor);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let gamma = sxy / sxx;
    let alpha = my - gamma * mx;
    let residuals = Vector::from_iterator(t - 1, x.iter().zip(y).map(|(a, b)| b - alpha - gamma * a));
    let sigma2 = residuals.norm_squared() / n;
    Ok(Ar1Fit {
        alpha,
        gamma,
        residuals,
        sigma2,
    })
}

/// Least-squares fit of `y = Xβ + ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct Regression {
    pub beta: Vector,
    pub residuals: Vector,
}

/// Ordinary least squares by Householder QR.
pub fn fit_stochastic_regression(y: &Vector, x: &Matrix) -> Result<Regression> {
    let (t, k) = x.shape();
    if y.len() != t {
        return Err(Error::DimensionMismatch {
            expected: t,
            found: y.len(),
        });
    }
    if t <= k {
        return Err(Error::SeriesTooShort { len: t, min: k + 1 });
    }
    let beta = least_squares_operator(x)? * y;
    let residuals = y - x * &beta;
    Ok(Regression { beta, residuals })
}

/// `(XᵀX)⁻¹Xᵀ` computed as `R⁻¹Qᵀ`.
fn least_squares_operator(x: &Matrix) -> Result<Matrix> {
    let k = x.ncols();
    let qr = x.clone().qr();
    let r = qr.r();
    let largest = (0..k).fold(0.0_f64, |a, i| a.max(r[(i, i)].abs()));
    if k == 0 || (0..k).any(|i| !(r[(i, i)].abs() > 1e-12 * largest)) {
        return Err(Error::RankDeficient);
    }
    let qt = qr.q().transpose();
    r.solve_upper_triangular(&qt).ok_or(Error::RankDeficient)
}

/// Parameters of `s²_t = ω + a s²_{t-1} + b d²_{t-1}`, where `d` is the
/// driving series (the innovation by default).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchParams {
    pub omega: f64,
    pub a: f64,
    pub b: f64,
}

impl GarchParams {
    /// Constant variance `σ²` as a degenerate GARCH.
    pub fn constant(variance: f64) -> Self {
        Self {
            omega: variance,
            a: 0.0,
            b: 0.0,
        }
    }

    pub fn persistence(&self) -> f64 {
        self.a + self.b
    }

    /// Conditional variances `s²_0, ..., s²_{T-1}` from `s²_0 = initial`,
    /// followed by the one-step-ahead `s²_T`.
    pub fn variance_path(&self, initial: f64, driver: &[f64]) -> (Vec<f64>, f64) {
        let mut h = Vec::with_capacity(driver.len());
        let mut prev = initial;
        for t in 0..driver.len() {
            if t > 0 {
                let lag = driver[t - 1];
                prev = self.omega + self.a * prev + self.b * lag * lag;
            }
            h.push(prev);
        }
        let next = match driver.last() {
            Some(&d) => self.omega + self.a * prev + self.b * d * d,
            None => initial,
        };
        (h, next)
    }
}

/// Which squared series drives the variance recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GarchForm {
    /// Lagged squared innovation `ε²_{t-1}`.
    #[default]
    Innovation,
    /// Lagged squared return `r²_{t-1}`, the literal printed form.
    Return,
}

/// Gaussian quasi-maximum-likelihood GARCH(1,1) fit.
#[derive(Debug, Clone, PartialEq)]
pub struct GarchFit {
    pub params: GarchParams,
    /// In-sample conditional standard deviations `s_t`.
    pub s_series: Vector,
    /// One-step-ahead standard deviation.
    pub s_next: f64,
    pub log_likelihood: f64,
    /// Log-likelihood of the constant-variance fit.
    pub constant_log_likelihood: f64,
}

/// Upper limit of `a + b`.
pub const MAX_PERSISTENCE: f64 = 1.0 - 1e-6;

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

fn logit(p: f64) -> f64 {
    libm::log(p / (1.0 - p))
}

fn params_from(theta: &[f64]) -> GarchParams {
    let persistence = MAX_PERSISTENCE * logistic(theta[1]);
    let share = logistic(theta[2]);
    GarchParams {
        omega: libm::exp(theta[0]),
        a: persistence * share,
        b: persistence * (1.0 - share),
    }
}

fn theta_from(omega: f64, persistence: f64, share: f64) -> [f64; 3] {
    [libm::log(omega), logit(persistence / MAX_PERSISTENCE), logit(share)]
}

/// Gaussian log-likelihood of `resid` under conditional variances `h`
/// (additive constant dropped).
fn log_likelihood(resid: &[f64], h: &[f64]) -> f64 {
    -0.5 * resid.iter().zip(h).map(|(e, v)| libm::log(*v) + e * e / v).sum::<f64>()
}

/// Fits GARCH(1,1) to regression residuals with the innovation-driven
/// recursion.
pub fn fit_garch11(residuals: &[f64]) -> Result<GarchFit> {
    fit_garch11_driven(residuals, residuals)
}

/// Fits GARCH(1,1) where `driver[t-1]²` enters the variance of
/// `residuals[t]`. The recursion starts at the sample variance of the
/// residuals; `(a, b)` are searched on a logistic scale with
/// `a + b ≤ 1 - 1e-6` and `ω` on a log scale, by Nelder-Mead from three
/// fixed starting points.
pub fn fit_garch11_driven(residuals: &[f64], driver: &[f64]) -> Result<GarchFit> {
    let t = residuals.len();
    if t < 30 {
        return Err(Error::SeriesTooShort { len: t, min: 30 });
    }
    if driver.len() != t {
        return Err(Error::DimensionMismatch {
            expected: t,
            found: driver.len(),
        });
    }
    if residuals.iter().chain(driver).any(|x| !x.is_finite()) {
        return Err(Error::OptimizerFailed("non-finite input".into()));
    }
    let variance = linalg::variance(residuals);
    if !(variance > 0.0) {
        return Err(Error::OptimizerFailed("residuals have zero variance".into()));
    }
    let mean_square = residuals.iter().map(|e| e * e).sum::<f64>() / t as f64;
    let constant = log_likelihood(residuals, &vec![mean_square; t]);
    let objective = |theta: &[f64]| {
        let p = params_from(theta);
        let (h, _) = p.variance_path(variance, driver);
        if h.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return f64::INFINITY;
        }
        -log_likelihood(residuals, &h)
    };
    let opts = NelderMeadOptions {
        initial_step: 0.5,
        f_tol: 1e-12,
        x_tol: 1e-7,
        max_evaluations: 3000,
    };
    let starts = [(0.9, 0.9), (0.6, 0.5), (0.1, 0.5)];
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (persistence, share) in starts {
        let start = theta_from(variance * (1.0 - persistence), persistence, share);
        let first = nelder_mead(objective, &start, &opts);
        // A restart from the first optimum guards against simplex collapse.
        let run = nelder_mead(objective, &first.x, &opts);
        if run.value.is_finite() && best.as_ref().is_none_or(|b| run.value < b.1) {
            best = Some((run.x, run.value));
        }
    }
    let (theta, nll) = best.ok_or_else(|| Error::OptimizerFailed("likelihood is not finite".into()))?;
    let fitted = -nll;
    if fitted < constant - 1e-8 * (1.0 + constant.abs()) {
        return Err(Error::OptimizerFailed(
            "no improvement over the constant-variance fit".into(),
        ));
    }
    let params = params_from(&theta);
    let (h, next) = params.variance_path(variance, driver);
    Ok(GarchFit {
        params,
        s_series: Vector::from_iterator(t, h.iter().map(|v| libm::sqrt(*v))),
        s_next: libm::sqrt(next),
        log_likelihood: fitted,
        constant_log_likelihood: constant,
    })
}

/// Regressors and volatility model of a stochastic regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrgSpec {
    /// Include the asset's own lagged return.
    pub own_lag: bool,
    /// Include the lagged benchmark return.
    pub benchmark_lag: bool,
    /// GARCH(1,1) errors; `None` keeps the variance constant.
    pub garch: Option<GarchForm>,
}

impl SrgSpec {
    /// Regressors `(1, e_{t-1}, u_{t-1})` with GARCH(1,1) errors.
    pub fn srg() -> Self {
        Self {
            own_lag: true,
            benchmark_lag: true,
            garch: Some(GarchForm::Innovation),
        }
    }

    /// AR(1) with constant variance.
    pub fn ar1() -> Self {
        Self {
            own_lag: true,
            benchmark_lag: false,
            garch: None,
        }
    }

    fn regressors(&self) -> usize {
        1 + self.own_lag as usize + self.benchmark_lag as usize
    }
}

/// Fitted per-asset stochastic regressions `r_it = β_iᵀx_{i,t-1} + ε_it`
/// with `ε_it = s_{i,t-1} z_it`.
#[derive(Debug, Clone, PartialEq)]
pub struct SrgGarchModel {
    pub spec: SrgSpec,
    pub beta: Vec<Vector>,
    pub garch: Vec<GarchParams>,
    /// Design matrices, one row per usable period.
    pub design: Vec<Matrix>,
    /// Regressors `x_{i,n}` for the next period.
    pub x_next: Vec<Vector>,
    /// Conditional standard deviations, one column per asset.
    pub s_series: Matrix,
    /// Standardized residuals `ẑ_t`, one row per usable period.
    pub z_resid: Matrix,
    /// Covariance of the standardized residuals (divisor `T`).
    pub z_cov: Matrix,
    pub s_next: Vector,
    ls_operators: Vec<Matrix>,
}

/// Fits the model to each column of `panel`; row `t` is regressed on
/// row `t - 1` (and on `benchmark[t - 1]` when the spec asks for it).
pub fn fit_srg_garch(panel: &ReturnsPanel, benchmark: Option<&[f64]>, spec: &SrgSpec) -> Result<SrgGarchModel> {
    let (t, m) = panel.data().shape();
    let k = spec.regressors();
    let min = if spec.garch.is_some() { 31 } else { k + 2 };
    if t < min {
        return Err(Error::SeriesTooShort { len: t, min });
    }
    let u = match (spec.benchmark_lag, benchmark) {
        (true, Some(u)) if u.len() == t => Some(u),
        (true, Some(u)) => {
            return Err(Error::DimensionMismatch {
                expected: t,
                found: u.len(),
            })
        }
        (true, None) => return Err(Error::InvalidParameter("benchmark series required".into())),
        (false, _) => None,
    };
    let data = panel.data();
    let rows = t - 1;
    let row_of = |i: usize, s: usize| -> Vec<f64> {
        let mut x = Vec::with_capacity(k);
        x.push(1.0);
        if spec.own_lag {
            x.push(data[(s, i)]);
        }
        if let Some(u) = u {
            x.push(u[s]);
        }
        x
    };
    let fits = par::map_indexed(m, |i| -> Result<_> {
        let design = Matrix::from_fn(rows, k, |r, c| row_of(i, r)[c]);
        let y = Vector::from_fn(rows, |r, _| data[(r + 1, i)]);
        let op = least_squares_operator(&design)?;
        let beta = &op * &y;
        let resid = &y - &design * &beta;
        let (params, s, s_next) = match spec.garch {
            Some(form) => {
                let driver: Vec<f64> = match form {
                    GarchForm::Innovation => resid.iter().copied().collect(),
                    GarchForm::Return => y.iter().copied().collect(),
                };
                let fit = fit_garch11_driven(resid.as_slice(), &driver)?;
                (fit.params, fit.s_series, fit.s_next)
            }
            None => {
                let v = resid.norm_squared() / rows as f64;
                if !(v > 0.0) {
                    return Err(Error::ZeroVariance);
                }
                let sd = libm::sqrt(v);
                (GarchParams::constant(v), Vector::from_element(rows, sd), sd)
            }
        };
        let x_next = Vector::from_vec(row_of(i, t - 1));
        Ok((beta, params, design, x_next, s, s_next, resid, op))
    });
    let mut model = SrgGarchModel {
        spec: *spec,
        beta: Vec::with_capacity(m),
        garch: Vec::with_capacity(m),
        design: Vec::with_capacity(m),
        x_next: Vec::with_capacity(m),
        s_series: Matrix::zeros(rows, m),
        z_resid: Matrix::zeros(rows, m),
        z_cov: Matrix::zeros(m, m),
        s_next: Vector::zeros(m),
        ls_operators: Vec::with_capacity(m),
    };
    for (i, f) in fits.into_iter().enumerate() {
        let (beta, params, design, x_next, s, s_next, resid, op) = f?;
        for r in 0..rows {
            model.s_series[(r, i)] = s[r];
            model.z_resid[(r, i)] = resid[r] / s[r];
        }
        model.s_next[i] = s_next;
        model.beta.push(beta);
        model.garch.push(params);
        model.design.push(design);
        model.x_next.push(x_next);
        model.ls_operators.push(op);
    }
    model.z_cov = MomentEstimate::from_data(&model.z_resid).cov;
    Ok(model)
}

impl SrgGarchModel {
    pub fn n_assets(&self) -> usize {
        self.beta.len()
    }

    /// `(μ_n, V_n)` at the fitted next-period regressors.
    pub fn predictive_moments(&self) -> (Vector, Matrix) {
        predictive_moments_srg(self, &self.x_next).expect("fitted regressors match")
    }

    /// Predictive `(μ_n, V_n)` of a replicate in which the standardized
    /// residuals are the rows `rows` of `z_resid`: the regressions are refit
    /// on `y* = Xβ̂ + s ⊙ z*` with the design and volatilities held fixed,
    /// and `σ̂_ij` is recomputed from the resampled rows.
    pub fn replicate_moments(&self, rows: &[usize]) -> (Vector, Matrix) {
        let m = self.n_assets();
        let n = self.z_resid.nrows();
        let mut mu = Vector::zeros(m);
        for i in 0..m {
            let eps = Vector::from_fn(n, |r, _| self.s_series[(r, i)] * self.z_resid[(rows[r], i)]);
            let beta = &self.beta[i] + &self.ls_operators[i] * eps;
            mu[i] = beta.dot(&self.x_next[i]);
        }
        let z_cov = MomentEstimate::from_rows(&self.z_resid, rows).cov;
        (mu.clone(), compose_second_moment(&mu, &self.s_next, &z_cov))
    }
}

/// `μμᵀ + (s_i s_j σ_ij)`.
fn compose_second_moment(mu: &Vector, s: &Vector, z_cov: &Matrix) -> Matrix {
    let m = mu.len();
    let v = Matrix::from_fn(m, m, |i, j| mu[i] * mu[j] + s[i] * s[j] * z_cov[(i, j)]);
    linalg::symmetrize(&v)
}

/// `μ_n = (β̂_iᵀx_{i,n})_i`, `V_n = μ_nμ_nᵀ + (ŝ_{i,n} ŝ_{j,n} σ̂_ij)`.
pub fn predictive_moments_srg(model: &SrgGarchModel, x_next: &[Vector]) -> Result<(Vector, Matrix)> {
    let m = model.n_assets();
    if x_next.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: x_next.len(),
        });
    }
    let mut mu = Vector::zeros(m);
    for i in 0..m {
        if x_next[i].len() != model.beta[i].len() {
            return Err(Error::DimensionMismatch {
                expected: model.beta[i].len(),
                found: x_next[i].len(),
            });
        }
        mu[i] = model.beta[i].dot(&x_next[i]);
    }
    let v = compose_second_moment(&mu, &model.s_next, &model.z_cov);
    Ok((mu, v))
}

/// `b` resamples (with replacement) of the rows of `z_resid`; resample `k`
/// draws from `rng::stream(seed, k)`.
pub fn residual_bootstrap(model: &SrgGarchModel, b: usize, seed: u64) -> Vec<Vec<usize>> {
    bootstrap_rows(model.z_resid.nrows(), b, seed)
}

/// `b` resamples of `0..n` with replacement, resample `k` drawn from
/// `rng::stream(seed, k)`.
pub fn bootstrap_rows(n: usize, b: usize, seed: u64) -> Vec<Vec<usize>> {
    (0..b)
        .map(|k| rng::resample_indices(&mut rng::stream(seed, k as u64), n))
        .collect()
}

/// Ljung-Box portmanteau statistic and its chi-square p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LjungBox {
    pub statistic: f64,
    pub p_value: f64,
}

/// `Q = T(T+2) Σ_{k=1}^{L} ρ̂_k²/(T-k)` with `L` degrees of freedom.
pub fn ljung_box(series: &[f64], max_lag: usize) -> Result<LjungBox> {
    let t = series.len();
    if max_lag == 0 {
        return Err(Error::InvalidParameter("max_lag must be positive".into()));
    }
    if t <= max_lag + 1 {
        return Err(Error::SeriesTooShort {
            len: t,
            min: max_lag + 2,
        });
    }
    let mean = linalg::mean(series);
    let dev: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if !(denom > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let tf = t as f64;
    let mut q = 0.0;
    for k in 1..=max_lag {
        let num: f64 = (k..t).map(|s| dev[s] * dev[s - k]).sum();
        let rho = num / denom;
        q += rho * rho / (tf - k as f64);
    }
    let statistic = tf * (tf + 2.0) * q;
    Ok(LjungBox {
        statistic,
        p_value: special::chi_square_sf(statistic, max_lag as f64),
    })
}
