//! Simulation studies of portfolio rules under known or prior-drawn moments:
//! reward tables and actual-frontier sweeps.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::estimators::{self, NiwPrior};
use crate::frontier::{self, Bounds, InfeasiblePolicy, WeightVector};
use crate::linalg::{self, Matrix, Vector};
use crate::moments::{self, MomentEstimate, ReturnsPanel};
use crate::npeb::{self, BootstrapReward, EtaProblem, WeightPath};
use crate::par;
use crate::qp::{self, QpProblem};
use crate::rng::{self, StreamRng};

fn sym(diag: &[f64], off: &[((usize, usize), f64)]) -> Matrix {
    let m = diag.len();
    let mut s = Matrix::from_diagonal(&Vector::from_column_slice(diag));
    for &((i, j), x) in off {
        s[(i - 1, j - 1)] = x;
        s[(j - 1, i - 1)] = x;
    }
    debug_assert_eq!(s.nrows(), m);
    s
}

/// Four-asset prior of the simulation study (returns in percent).
pub fn prior_m4() -> NiwPrior {
    let psi = sym(
        &[3.37, 4.22, 2.75, 8.43],
        &[
            ((1, 2), 2.04),
            ((1, 3), 0.32),
            ((1, 4), 1.59),
            ((2, 3), -0.05),
            ((2, 4), 3.02),
            ((3, 4), 1.08),
        ],
    );
    NiwPrior::new(Vector::from_column_slice(&[2.48, 2.17, 1.61, 3.42]), 5.0, 10.0, psi).expect("valid preset")
}

/// The four-asset prior extended by two assets with low information ratios.
pub fn prior_m6() -> NiwPrior {
    let psi = sym(
        &[3.37, 4.22, 2.75, 8.43, 2.02, 10.32],
        &[
            ((1, 2), 2.04),
            ((1, 3), 0.32),
            ((1, 4), 1.59),
            ((2, 3), -0.05),
            ((2, 4), 3.02),
            ((3, 4), 1.08),
            ((5, 6), 0.90),
            ((1, 5), -0.17),
            ((2, 5), -0.03),
            ((3, 5), -0.91),
            ((4, 5), -0.33),
            ((1, 6), -3.40),
            ((2, 6), -3.99),
            ((3, 6), -0.08),
            ((4, 6), -3.58),
        ],
    );
    NiwPrior::new(
        Vector::from_column_slice(&[2.48, 2.17, 1.61, 3.42, -0.014, -0.064]),
        5.0,
        10.0,
        psi,
    )
    .expect("valid preset")
}

/// Fixed `(μ, Σ)` of the frequentist scenarios `k = 1, 2, 3` (percent).
pub fn freq_truth(k: usize) -> (Vector, Matrix) {
    match k {
        1 => (
            Vector::from_column_slice(&[2.42, 1.88, 1.58, 3.47]),
            sym(
                &[1.17, 0.82, 1.37, 2.86],
                &[
                    ((1, 2), 0.79),
                    ((1, 3), 0.84),
                    ((1, 4), 1.61),
                    ((2, 3), 0.61),
                    ((2, 4), 1.23),
                    ((3, 4), 1.35),
                ],
            ),
        ),
        2 => (
            Vector::from_column_slice(&[2.59, 2.29, 1.25, 3.13]),
            sym(
                &[1.32, 0.67, 1.43, 1.03],
                &[
                    ((1, 2), 0.75),
                    ((1, 3), 0.85),
                    ((1, 4), 0.68),
                    ((2, 3), 0.32),
                    ((2, 4), 0.44),
                    ((3, 4), 0.61),
                ],
            ),
        ),
        3 => (
            Vector::from_column_slice(&[1.91, 1.58, 1.03, 2.76]),
            sym(
                &[1.00, 0.83, 0.35, 0.62],
                &[
                    ((1, 2), 0.73),
                    ((1, 3), 0.26),
                    ((1, 4), 0.36),
                    ((2, 3), 0.16),
                    ((2, 4), 0.50),
                    ((3, 4), 0.14),
                ],
            ),
        ),
        _ => panic!("frequentist scenarios are numbered 1 to 3"),
    }
}

/// Seed of the draws that extend the frequentist scenarios to six assets.
pub const EXTENSION_SEED: u64 = 0x6d76_6f70_7436;

fn normal(r: &mut impl Rng) -> f64 {
    StandardNormal.sample(r)
}

/// Inverted-Wishart draw `IW_m(Ψ, dof)` (mean `Ψ/(dof - m - 1)`) via the
/// Bartlett decomposition of a Wishart with scale `Ψ⁻¹`.
pub fn sample_inverse_wishart(psi: &Matrix, dof: f64, r: &mut impl Rng) -> Result<Matrix> {
    let m = psi.nrows();
    if !(dof > m as f64 - 1.0) {
        return Err(Error::DegreesOfFreedomTooSmall {
            dof,
            min: m as f64 - 1.0,
        });
    }
    let scale = linalg::spd_inverse(psi)?;
    let l = linalg::cholesky(&scale).ok_or(Error::NotPositiveDefinite)?.l();
    let mut a = Matrix::zeros(m, m);
    for i in 0..m {
        let chi = ChiSquared::new(dof - i as f64).map_err(|_| Error::InvalidParameter("chi-square dof".into()))?;
        a[(i, i)] = libm::sqrt(chi.sample(r));
        for j in 0..i {
            a[(i, j)] = normal(r);
        }
    }
    let la = l * a;
    let w = &la * la.transpose();
    Ok(linalg::symmetrize(&linalg::spd_inverse(&w)?))
}

/// Draws `(μ, Σ)`: `Σ ~ IW_m(Ψ, n₀)`, `μ | Σ ~ N(ν, Σ/κ)`.
pub fn sample_niw_with(prior: &NiwPrior, r: &mut impl Rng) -> Result<(Vector, Matrix)> {
    let sigma = sample_inverse_wishart(&prior.psi, prior.n0, r)?;
    let l = linalg::cholesky(&(&sigma / prior.kappa))
        .ok_or(Error::NotPositiveDefinite)?
        .l();
    let z = Vector::from_fn(prior.dim(), |_, _| normal(r));
    Ok((&prior.nu + l * z, sigma))
}

pub fn sample_niw(prior: &NiwPrior, seed: u64) -> Result<(Vector, Matrix)> {
    sample_niw_with(prior, &mut rng::stream(seed, 0))
}

/// Draws the trailing assets of `(μ, Σ)` from `prior` conditional on the
/// leading block equal to `(mu1, sigma1)`.
///
/// With `p` leading and `q` trailing assets, the partitioned inverted Wishart
/// gives `Σ₂₂.₁ ~ IW_q(Ψ₂₂.₁, n₀)` and
/// `Σ₁₁⁻¹Σ₁₂ | Σ₂₂.₁ ~ MN(Ψ₁₁⁻¹Ψ₁₂, Ψ₁₁⁻¹, Σ₂₂.₁)`, both independent of
/// `Σ₁₁`; then `μ₂ | μ₁, Σ ~ N(ν₂ + Bᵀ(μ₁ - ν₁), Σ₂₂.₁/κ)`.
pub fn extend_conditional(
    prior: &NiwPrior,
    mu1: &Vector,
    sigma1: &Matrix,
    r: &mut impl Rng,
) -> Result<(Vector, Matrix)> {
    let m = prior.dim();
    let p = mu1.len();
    if p >= m || sigma1.shape() != (p, p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: sigma1.nrows(),
        });
    }
    let q = m - p;
    let psi = &prior.psi;
    let psi11 = psi.view((0, 0), (p, p)).into_owned();
    let psi12 = psi.view((0, p), (p, q)).into_owned();
    let psi22 = psi.view((p, p), (q, q)).into_owned();
    let psi11_inv = linalg::spd_inverse(&psi11)?;
    let psi22_1 = linalg::symmetrize(&(&psi22 - psi12.transpose() * &psi11_inv * &psi12));
    let s22_1 = sample_inverse_wishart(&psi22_1, prior.n0, r)?;
    let row = linalg::cholesky(&psi11_inv).ok_or(Error::NotPositiveDefinite)?.l();
    let col = linalg::cholesky(&s22_1).ok_or(Error::NotPositiveDefinite)?.l();
    let z = Matrix::from_fn(p, q, |_, _| normal(r));
    let b = &psi11_inv * &psi12 + row * z * col.transpose();
    let s12 = sigma1 * &b;
    let s22 = &s22_1 + b.transpose() * sigma1 * &b;
    let mut sigma = Matrix::zeros(m, m);
    sigma.view_mut((0, 0), (p, p)).copy_from(sigma1);
    sigma.view_mut((0, p), (p, q)).copy_from(&s12);
    sigma.view_mut((p, 0), (q, p)).copy_from(&s12.transpose());
    sigma.view_mut((p, p), (q, q)).copy_from(&s22);
    let nu1 = prior.nu.rows(0, p).into_owned();
    let nu2 = prior.nu.rows(p, q).into_owned();
    let l = linalg::cholesky(&(&s22_1 / prior.kappa))
        .ok_or(Error::NotPositiveDefinite)?
        .l();
    let zq = Vector::from_fn(q, |_, _| normal(r));
    let mu2 = nu2 + b.transpose() * (mu1 - nu1) + l * zq;
    let mut mu = Vector::zeros(m);
    mu.rows_mut(0, p).copy_from(mu1);
    mu.rows_mut(p, q).copy_from(&mu2);
    Ok((mu, linalg::symmetrize(&sigma)))
}

/// Maximizes `wᵀμ - λ wᵀΣw` with known moments.
pub fn oracle_weight(mu: &Vector, sigma: &Matrix, lambda: f64, bounds: &Bounds) -> Result<WeightVector> {
    let p = QpProblem::with_budget(sigma * (2.0 * lambda), -mu).bounds(bounds.lower.clone(), bounds.upper.clone());
    let sol = qp::solve_qp(&p)?.into_result()?;
    Ok(WeightVector::new(sol.w, "oracle"))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioKind {
    /// `(μ, Σ)` redrawn from the prior in every simulation.
    Bayes,
    /// Fixed `(μ, Σ)`.
    Frequentist { mu: Vector, sigma: Matrix },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    /// Prior of the Bayes rule (and of the truth in the Bayes scenario).
    pub prior: NiwPrior,
    pub n: usize,
    pub bounds: Bounds,
    pub lambdas: Vec<f64>,
    pub n_sims: usize,
    /// Bootstrap replicates of the NPEB rule.
    pub npeb_replicates: usize,
    /// Ridge added to a singular plug-in covariance.
    pub plug_in_ridge: f64,
}

impl Scenario {
    fn base(name: &str, kind: ScenarioKind, prior: NiwPrior, n: usize) -> Self {
        let m = prior.dim();
        Self {
            name: name.into(),
            kind,
            prior,
            n,
            bounds: Bounds::long_only(m),
            lambdas: vec![1.0, 5.0, 10.0],
            n_sims: 500,
            npeb_replicates: npeb::DEFAULT_REPLICATES,
            plug_in_ridge: moments::DEFAULT_RIDGE,
        }
    }

    /// Four assets, `n = 6`, truth drawn from the prior.
    pub fn bayes() -> Self {
        Self::base("Bayes", ScenarioKind::Bayes, prior_m4(), 6)
    }

    /// Four assets, `n = 6`, fixed truth `k` in 1..=3.
    pub fn freq(k: usize) -> Self {
        let (mu, sigma) = freq_truth(k);
        Self::base(
            &alloc::format!("Freq {k}"),
            ScenarioKind::Frequentist { mu, sigma },
            prior_m4(),
            6,
        )
    }

    /// Six assets, `n = 8`, truth drawn from the extended prior.
    pub fn bayes_m6() -> Self {
        Self::base("Bayes", ScenarioKind::Bayes, prior_m6(), 8)
    }

    /// Six assets, `n = 8`: frequentist scenario `k` with two assets drawn
    /// from the extended prior conditional on the four-asset truth.
    pub fn freq_m6(k: usize) -> Self {
        let (mu1, sigma1) = freq_truth(k);
        let prior = prior_m6();
        let mut r = rng::stream(EXTENSION_SEED, k as u64);
        let (mu, sigma) = extend_conditional(&prior, &mu1, &sigma1, &mut r).expect("valid preset");
        Self::base(
            &alloc::format!("Freq {k}"),
            ScenarioKind::Frequentist { mu, sigma },
            prior,
            8,
        )
    }

    /// The four scenarios of the four-asset reward table.
    pub fn table1() -> Vec<Self> {
        vec![Self::bayes(), Self::freq(1), Self::freq(2), Self::freq(3)]
    }

    /// The four scenarios of the six-asset reward table.
    pub fn table2() -> Vec<Self> {
        vec![Self::bayes_m6(), Self::freq_m6(1), Self::freq_m6(2), Self::freq_m6(3)]
    }

    /// Rescales every return quantity by `s` (e.g. `0.01` for percent to
    /// decimal): means by `s`, covariances and `Ψ` by `s²`.
    pub fn scaled(mut self, s: f64) -> Self {
        self.prior.nu *= s;
        self.prior.psi *= s * s;
        self.plug_in_ridge *= s * s;
        if let ScenarioKind::Frequentist { mu, sigma } = &mut self.kind {
            *mu *= s;
            *sigma *= s * s;
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    /// Fixed truth of a frequentist scenario.
    pub fn truth(&self) -> Option<(Vector, Matrix)> {
        match &self.kind {
            ScenarioKind::Frequentist { mu, sigma } => Some((mu.clone(), sigma.clone())),
            ScenarioKind::Bayes => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        if self.n < 2 {
            return Err(Error::PanelTooSmall { rows: self.n, min: 2 });
        }
        if self.n_sims == 0 || self.lambdas.is_empty() || self.lambdas.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidParameter(
                "scenario needs simulations and positive lambdas".into(),
            ));
        }
        if let ScenarioKind::Frequentist { mu, sigma } = &self.kind {
            if mu.len() != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    found: mu.len(),
                });
            }
            if !linalg::is_positive_definite(sigma) {
                return Err(Error::NotPositiveDefinite);
            }
        }
        Ok(())
    }

    fn draw_truth(&self, r: &mut StreamRng) -> Result<(Vector, Matrix)> {
        match &self.kind {
            ScenarioKind::Bayes => sample_niw_with(&self.prior, r),
            ScenarioKind::Frequentist { mu, sigma } => Ok((mu.clone(), sigma.clone())),
        }
    }
}

/// `n` i.i.d. `N(μ, Σ)` rows.
pub fn simulate_returns(mu: &Vector, sigma: &Matrix, n: usize, r: &mut impl Rng) -> Result<Matrix> {
    let l = linalg::cholesky(sigma).ok_or(Error::NotPositiveDefinite)?.l();
    let m = mu.len();
    let mut data = Matrix::zeros(n, m);
    for t in 0..n {
        let z = Vector::from_fn(m, |_, _| normal(r));
        data.row_mut(t).copy_from(&(mu + &l * z).transpose());
    }
    Ok(data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    Bayes,
    PlugIn,
    Oracle,
    Npeb,
}

impl Rule {
    pub const ALL: [Rule; 4] = [Rule::Bayes, Rule::PlugIn, Rule::Oracle, Rule::Npeb];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Bayes => "Bayes",
            Rule::PlugIn => "Plug-in",
            Rule::Oracle => "Oracle",
            Rule::Npeb => "NPEB",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleReward {
    pub rule: Rule,
    pub reward: f64,
    /// Batch-means standard error.
    pub se: f64,
    /// Actual mean `mean_s(w_sᵀμ_s)`.
    pub mean: f64,
    /// Actual variance `mean_s(w_sᵀΣ_s w_s) + var_s(w_sᵀμ_s)`.
    pub variance: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardRow {
    pub scenario: String,
    pub lambda: f64,
    pub cells: Vec<RuleReward>,
}

impl RewardRow {
    pub fn get(&self, rule: Rule) -> &RuleReward {
        self.cells
            .iter()
            .find(|c| c.rule == rule)
            .expect("every rule is tabulated")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RewardTable {
    pub rows: Vec<RewardRow>,
}

impl RewardTable {
    pub fn row(&self, scenario: &str, lambda: f64) -> Option<&RewardRow> {
        self.rows.iter().find(|r| r.scenario == scenario && r.lambda == lambda)
    }
}

/// Number of batches for batch-means standard errors.
pub const SE_BATCHES: usize = 20;

/// Largest tolerated fraction of failed simulations per rule.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// Per-simulation outcome: `(wᵀμ, wᵀΣw)` per λ and rule.
type SimOutcome = Vec<[Option<(f64, f64)>; 4]>;

fn simulate_once(scenario: &Scenario, seed: u64, s: usize) -> Result<SimOutcome> {
    let mut r = rng::stream(seed, s as u64);
    let (mu, sigma) = scenario.draw_truth(&mut r)?;
    let data = simulate_returns(&mu, &sigma, scenario.n, &mut r)?;
    let panel = ReturnsPanel::unrestricted_matrix(data)?;
    let sample = MomentEstimate::from_data(panel.data());
    let bounds = &scenario.bounds;

    let post = estimators::niw_update_moments(&scenario.prior, &sample);
    let bayes = estimators::niw_predictive_moments(&post);
    let boot = BootstrapReward::new(
        &panel,
        bounds,
        scenario.npeb_replicates,
        rng::derive_seed(seed ^ 0x9e37, s as u64),
    );
    let full_path = WeightPath::new(&sample.mean, &sample.second_moment, bounds);
    let plug_cov = if linalg::is_positive_definite(&sample.cov) {
        sample.cov.clone()
    } else {
        moments::regularize_cov(&sample.cov, scenario.plug_in_ridge)
    };

    let eval = |w: &Vector| (w.dot(&mu), linalg::quad_form(&sigma, w));
    let mut out = Vec::with_capacity(scenario.lambdas.len());
    for &lambda in &scenario.lambdas {
        let bayes_w = bayes.as_ref().ok().and_then(|(mu_n, v_n)| {
            let p = EtaProblem::new(mu_n.clone(), v_n.clone(), lambda, bounds.clone()).ok()?;
            npeb::optimize_point(&p).ok().map(|e| e.w_star.w)
        });
        let plug_w = oracle_weight(&sample.mean, &plug_cov, lambda, bounds).ok().map(|w| w.w);
        let oracle_w = oracle_weight(&mu, &sigma, lambda, bounds).ok().map(|w| w.w);
        let npeb_w = match (&boot, &full_path) {
            (Ok(boot), Ok(full)) => EtaProblem::new(
                sample.mean.clone(),
                sample.second_moment.clone(),
                lambda,
                bounds.clone(),
            )
            .ok()
            .and_then(|p| npeb::optimize_bootstrap(boot, &p, full).ok())
            .map(|e| e.w_star.w),
            _ => None,
        };
        out.push([
            bayes_w.as_ref().map(eval),
            plug_w.as_ref().map(eval),
            oracle_w.as_ref().map(eval),
            npeb_w.as_ref().map(eval),
        ]);
    }
    Ok(out)
}

/// `mean(a) - λ(mean(q) + var(a))` with its pieces.
fn study_reward(samples: &[(f64, f64)], lambda: f64) -> (f64, f64, f64) {
    let a: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let q: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let mean = linalg::mean(&a);
    let variance = linalg::mean(&q) + linalg::variance(&a);
    (mean - lambda * variance, mean, variance)
}

fn batch_se(samples: &[(f64, f64)], lambda: f64) -> f64 {
    let batches = SE_BATCHES.min(samples.len());
    if batches < 2 {
        return 0.0;
    }
    let size = samples.len() / batches;
    let rewards: Vec<f64> = (0..batches)
        .map(|b| study_reward(&samples[b * size..(b + 1) * size], lambda).0)
        .collect();
    let k = batches as f64;
    libm::sqrt(linalg::variance(&rewards) * k / (k - 1.0) / k)
}

/// Runs every rule over `scenario.n_sims` simulated training samples.
/// Simulation `s` draws from `rng::stream(seed, s)`.
pub fn run_reward_study(scenario: &Scenario, seed: u64) -> Result<RewardTable> {
    scenario.validate()?;
    let sims = par::map_indexed(scenario.n_sims, |s| simulate_once(scenario, seed, s));
    let mut outcomes = Vec::with_capacity(sims.len());
    for s in sims {
        outcomes.push(s?);
    }
    let mut table = RewardTable::default();
    for (li, &lambda) in scenario.lambdas.iter().enumerate() {
        let mut cells = Vec::with_capacity(4);
        for (ri, &rule) in Rule::ALL.iter().enumerate() {
            let samples: Vec<(f64, f64)> = outcomes.iter().filter_map(|o| o[li][ri]).collect();
            let failures = scenario.n_sims - samples.len();
            if failures as f64 > MAX_FAILURE_RATE * scenario.n_sims as f64 || samples.is_empty() {
                return Err(Error::TooManyFailures {
                    failed: failures,
                    total: scenario.n_sims,
                });
            }
            let (reward, mean, variance) = study_reward(&samples, lambda);
            cells.push(RuleReward {
                rule,
                reward,
                se: batch_se(&samples, lambda),
                mean,
                variance,
                failures,
            });
        }
        table.rows.push(RewardRow {
            scenario: scenario.name.clone(),
            lambda,
            cells,
        });
    }
    Ok(table)
}

/// Runs several scenarios; scenario `k` uses master seed `derive_seed(seed, k)`.
pub fn run_reward_studies(scenarios: &[Scenario], seed: u64) -> Result<RewardTable> {
    let mut table = RewardTable::default();
    for (k, s) in scenarios.iter().enumerate() {
        table
            .rows
            .extend(run_reward_study(s, rng::derive_seed(seed, k as u64))?.rows);
    }
    Ok(table)
}

/// Rule traced along an actual-frontier sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepRule {
    /// Markowitz weights with the true moments; grid over targets.
    Oracle,
    /// Sample mean and covariance; grid over targets.
    PlugIn,
    /// Sample mean and Ledoit-Wolf covariance; grid over targets.
    Shrinkage,
    /// Michaud resampling with the given replicate count; grid over targets.
    Michaud { replicates: usize },
    /// NPEB with the given replicate count; grid over `λ`.
    Npeb { replicates: usize },
}

impl SweepRule {
    pub fn name(&self) -> &'static str {
        match self {
            SweepRule::Oracle => "oracle",
            SweepRule::PlugIn => "plug-in",
            SweepRule::Shrinkage => "shrinkage",
            SweepRule::Michaud { .. } => "michaud",
            SweepRule::Npeb { .. } => "npeb",
        }
    }
}

/// Point of an actual frontier: the grid parameter (target mean or `λ`)
/// and the true mean and s.d. achieved by the rule across simulations.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub parameter: f64,
    pub mu: f64,
    pub sigma: f64,
    pub mean_weights: Vector,
    pub failures: usize,
}

/// Actual frontier of `rule` under fixed `(μ, Σ)` and training samples of
/// size `n`. Simulation `s` uses `rng::stream(seed, s)` for every grid value.
pub fn actual_frontier_sweep(
    mu: &Vector,
    sigma: &Matrix,
    rule: SweepRule,
    grid: &[f64],
    bounds: &Bounds,
    n: usize,
    n_sims: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    if !linalg::is_positive_definite(sigma) {
        return Err(Error::NotPositiveDefinite);
    }
    let m = mu.len();
    let sims = par::map_indexed(n_sims, |s| -> Result<Vec<Option<Vector>>> {
        let mut r = rng::stream(seed, s as u64);
        let data = simulate_returns(mu, sigma, n, &mut r)?;
        let panel = ReturnsPanel::unrestricted_matrix(data)?;
        let sample = MomentEstimate::from_data(panel.data());
        let policy = InfeasiblePolicy::TargetReplacement;
        let boot_seed = rng::derive_seed(seed ^ 0x9e37, s as u64);
        Ok(match rule {
            SweepRule::Oracle => grid
                .iter()
                .map(|&t| {
                    frontier::markowitz_with_policy(mu, sigma, t, bounds, &policy)
                        .ok()
                        .map(|p| p.weights.w)
                })
                .collect(),
            SweepRule::PlugIn => {
                let cov = moments::regularize_if_needed(&sample.cov).0;
                grid.iter()
                    .map(|&t| {
                        frontier::markowitz_with_policy(&sample.mean, &cov, t, bounds, &policy)
                            .ok()
                            .map(|p| p.weights.w)
                    })
                    .collect()
            }
            SweepRule::Shrinkage => {
                let cov = estimators::ledoit_wolf_constant_corr(&panel)?.sigma;
                grid.iter()
                    .map(|&t| {
                        frontier::markowitz_with_policy(&sample.mean, &cov, t, bounds, &policy)
                            .ok()
                            .map(|p| p.weights.w)
                    })
                    .collect()
            }
            SweepRule::Michaud { replicates } => grid
                .iter()
                .map(|&t| {
                    frontier::resampled_weights(&panel, t, replicates, bounds, boot_seed)
                        .ok()
                        .map(|r| r.weights.w)
                })
                .collect(),
            SweepRule::Npeb { replicates } => {
                let boot = BootstrapReward::new(&panel, bounds, replicates, boot_seed)?;
                let full = WeightPath::new(&sample.mean, &sample.second_moment, bounds)?;
                grid.iter()
                    .map(|&lambda| {
                        let p = EtaProblem::new(
                            sample.mean.clone(),
                            sample.second_moment.clone(),
                            lambda,
                            bounds.clone(),
                        )
                        .ok()?;
                        npeb::optimize_bootstrap(&boot, &p, &full).ok().map(|e| e.w_star.w)
                    })
                    .collect()
            }
        })
    });
    let mut per_sim = Vec::with_capacity(n_sims);
    for s in sims {
        per_sim.push(s?);
    }
    let mut points = Vec::with_capacity(grid.len());
    for (g, &parameter) in grid.iter().enumerate() {
        let ws: Vec<&Vector> = per_sim.iter().filter_map(|s| s[g].as_ref()).collect();
        let failures = n_sims - ws.len();
        if ws.is_empty() || failures as f64 > MAX_FAILURE_RATE * n_sims as f64 {
            return Err(Error::TooManyFailures {
                failed: failures,
                total: n_sims,
            });
        }
        let samples: Vec<(f64, f64)> = ws.iter().map(|w| (w.dot(mu), linalg::quad_form(sigma, w))).collect();
        let (_, mean, variance) = study_reward(&samples, 0.0);
        let mut mean_weights = Vector::zeros(m);
        for w in &ws {
            mean_weights += *w;
        }
        mean_weights /= ws.len() as f64;
        points.push(SweepPoint {
            parameter,
            mu: mean,
            sigma: libm::sqrt(variance.max(0.0)),
            mean_weights,
            failures,
        });
    }
    Ok(points)
}
