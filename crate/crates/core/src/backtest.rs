//! Rolling-window out-of-sample backtests: at every test period a rule is
//! fitted on the trailing window, its weights are held for one period and
//! the realized excess return over a benchmark is recorded.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::frontier::{self, Bounds, InfeasiblePolicy};
use crate::linalg::{self, Matrix, Vector};
use crate::moments::{self, MomentEstimate, ReturnsPanel};
use crate::npeb::{self, BootstrapReward, InformationRatioBootstrap};
use crate::timeseries::{self, GarchForm, SrgSpec};
use crate::{estimators, rng};

/// Benchmark the excess returns are measured against.
#[derive(Debug, Clone, PartialEq)]
pub enum Benchmark {
    /// Return series of an index, one entry per period.
    Index(Vec<f64>),
    /// Value-weighted portfolio of the panel's assets. Row `t` holds the
    /// market values at the end of period `t`; period `t` is weighted by
    /// row `t - 1` (row 0 for the first period).
    ValueWeighted(Matrix),
}

impl Benchmark {
    fn validate(&self, panel: &ReturnsPanel) -> Result<()> {
        let (t, m) = panel.data().shape();
        match self {
            Benchmark::Index(u) if u.len() != t => Err(Error::DimensionMismatch {
                expected: t,
                found: u.len(),
            }),
            Benchmark::Index(u) if u.iter().any(|x| !x.is_finite()) => {
                Err(Error::InvalidPanel("benchmark returns must be finite".into()))
            }
            Benchmark::ValueWeighted(mv) if mv.shape() != (t, m) => Err(Error::DimensionMismatch {
                expected: t,
                found: mv.nrows(),
            }),
            Benchmark::ValueWeighted(mv) if mv.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) => Err(
                Error::InvalidPanel("market values must be finite and non-negative".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Value weights of the assets for period `t`.
    fn value_weights(mv: &Matrix, t: usize) -> Result<Vector> {
        let row = mv.row(t.saturating_sub(1)).transpose();
        let total = row.sum();
        if !(total > 0.0) {
            return Err(Error::InvalidPanel(format!("market values of period {t} sum to zero")));
        }
        Ok(row / total)
    }

    /// Benchmark return of period `t`.
    fn period_return(&self, panel: &ReturnsPanel, t: usize) -> Result<f64> {
        match self {
            Benchmark::Index(u) => Ok(u[t]),
            Benchmark::ValueWeighted(mv) => {
                let w = Self::value_weights(mv, t)?;
                Ok(panel.data().row(t).transpose().dot(&w))
            }
        }
    }

    /// Benchmark returns of every period.
    pub fn series(&self, panel: &ReturnsPanel) -> Result<Vec<f64>> {
        self.validate(panel)?;
        (0..panel.n_periods()).map(|t| self.period_return(panel, t)).collect()
    }
}

/// Working model of the NPEB rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NpebModel {
    /// i.i.d. excess returns; bootstrap resamples training rows.
    Iid,
    /// AR(1) excess returns with constant variance.
    Ar,
    /// Regression on `(1, e_{t-1}, u_{t-1})` with GARCH(1,1) errors.
    Srg(GarchForm),
}

impl NpebModel {
    fn spec(&self) -> Option<SrgSpec> {
        match self {
            NpebModel::Iid => None,
            NpebModel::Ar => Some(SrgSpec::ar1()),
            NpebModel::Srg(form) => Some(SrgSpec {
                garch: Some(*form),
                ..SrgSpec::srg()
            }),
        }
    }
}

/// Portfolio rule refitted every period.
#[derive(Debug, Clone, PartialEq)]
pub enum BacktestRule {
    /// Markowitz weights from the sample mean and covariance for a target
    /// mean return per period.
    PlugIn { target: f64 },
    /// As `PlugIn` with the Ledoit-Wolf covariance.
    Shrinkage { target: f64 },
    /// Michaud resampled weights.
    Resampled { target: f64, replicates: usize },
    /// NPEB on excess returns with `λ` chosen by bootstrap information
    /// ratio over `grid`.
    Npeb {
        model: NpebModel,
        grid: Vec<f64>,
        replicates: usize,
    },
    /// Equal weights on the universe.
    EqualWeight,
    /// The value-weighted benchmark itself.
    HoldBenchmark,
}

impl BacktestRule {
    pub fn name(&self) -> String {
        match self {
            BacktestRule::PlugIn { target } => format!("plug-in({target})"),
            BacktestRule::Shrinkage { target } => format!("shrinkage({target})"),
            BacktestRule::Resampled { target, .. } => format!("resampled({target})"),
            BacktestRule::Npeb { model, .. } => match model {
                NpebModel::Iid => "npeb".to_string(),
                NpebModel::Ar => "npeb-ar".to_string(),
                NpebModel::Srg(_) => "npeb-srg".to_string(),
            },
            BacktestRule::EqualWeight => "equal-weight".to_string(),
            BacktestRule::HoldBenchmark => "benchmark".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    /// Training window length `n`.
    pub window: usize,
    /// Number of assets `m` held each period.
    pub universe_size: usize,
    pub rule: BacktestRule,
    /// Lower bound on every weight (0 for no short sales).
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub periods_per_year: f64,
    pub seed: u64,
}

impl BacktestConfig {
    pub fn new(rule: BacktestRule) -> Self {
        Self {
            window: 120,
            universe_size: 50,
            rule,
            lower_bound: 0.0,
            upper_bound: 1.0,
            periods_per_year: 12.0,
            seed: 0,
        }
    }

    fn bounds(&self, m: usize) -> Bounds {
        Bounds {
            lower: Vector::from_element(m, self.lower_bound),
            upper: Vector::from_element(m, self.upper_bound),
        }
    }
}

/// A period whose rule failed; `fallback` names the weights used instead.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodFailure {
    pub period: usize,
    pub message: String,
    pub fallback: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BacktestResult {
    pub rule: String,
    /// Row index in the input panel of each test period.
    pub periods: Vec<usize>,
    pub period_labels: Vec<String>,
    /// Realized excess return `wᵀr_t - u_t`.
    pub excess: Vec<f64>,
    /// Prefix sums of `excess`.
    pub cumulative: Vec<f64>,
    /// `√periods_per_year · ē / s_e`; 0 when undefined.
    pub information_ratio: f64,
    pub ir_defined: bool,
    /// Weights over every asset of the panel (zero outside the universe).
    pub weights: Vec<Vector>,
    pub universes: Vec<Vec<usize>>,
    /// `λ` chosen in each period (NPEB rules).
    pub lambdas: Vec<Option<f64>>,
    /// Target replacements and rule failures.
    pub infeasible: Vec<PeriodFailure>,
    pub warnings: Vec<String>,
}

/// `√k · mean / sd` with the sample s.d. (divisor `n - 1`). Returns
/// `(0, false)` when the s.d. is zero or there are fewer than two values.
pub fn realized_information_ratio(excess: &[f64], periods_per_year: f64) -> (f64, bool) {
    if excess.len() < 2 {
        return (0.0, false);
    }
    let n = excess.len() as f64;
    let mean = linalg::mean(excess);
    let sd = libm::sqrt(linalg::variance(excess) * n / (n - 1.0));
    if !(sd > 0.0) {
        return (0.0, false);
    }
    (libm::sqrt(periods_per_year) * mean / sd, true)
}

/// Per-asset `mean(e_i)/sd(e_i)` of excess returns over `benchmark`.
pub fn information_ratios(panel: &ReturnsPanel, benchmark: &[f64]) -> Result<Vec<f64>> {
    let (t, m) = panel.data().shape();
    if benchmark.len() != t {
        return Err(Error::DimensionMismatch {
            expected: t,
            found: benchmark.len(),
        });
    }
    Ok((0..m)
        .map(|i| {
            let e: Vec<f64> = (0..t).map(|s| panel.data()[(s, i)] - benchmark[s]).collect();
            let mean = linalg::mean(&e);
            let sd = libm::sqrt(linalg::variance(&e));
            if sd > 0.0 {
                mean / sd
            } else if mean > 0.0 {
                f64::INFINITY
            } else if mean < 0.0 {
                f64::NEG_INFINITY
            } else {
                0.0
            }
        })
        .collect())
}

/// Indices (ascending) of the `keep` assets with the highest information
/// ratios; ties are broken by asset label.
pub fn screen_by_information_ratio(panel: &ReturnsPanel, benchmark: &[f64], keep: usize) -> Result<Vec<usize>> {
    let m = panel.n_assets();
    if keep > m {
        return Err(Error::InvalidParameter(format!("cannot keep {keep} of {m} assets")));
    }
    let ir = information_ratios(panel, benchmark)?;
    let labels = panel.asset_labels();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| ir[b].total_cmp(&ir[a]).then_with(|| labels[a].cmp(&labels[b])));
    let mut kept = order[..keep].to_vec();
    kept.sort_unstable();
    Ok(kept)
}

/// Weights of one period, or the reason they could not be formed.
struct Fitted {
    w: Vector,
    lambda: Option<f64>,
    note: Option<String>,
}

fn fit_period(
    config: &BacktestConfig,
    train: &ReturnsPanel,
    u_train: &[f64],
    bounds: &Bounds,
    seed: u64,
) -> Result<Fitted> {
    let policy = InfeasiblePolicy::TargetReplacement;
    let markowitz = |mu: &Vector, cov: &Matrix, target: f64| -> Result<Fitted> {
        let p = frontier::markowitz_with_policy(mu, cov, target, bounds, &policy)?;
        let note = p
            .fallback
            .then(|| format!("target {target} replaced by {}", p.effective_target));
        Ok(Fitted {
            w: p.weights.w,
            lambda: None,
            note,
        })
    };
    match &config.rule {
        BacktestRule::PlugIn { target } => {
            let est = MomentEstimate::from_data(train.data());
            let cov = moments::regularize_if_needed(&est.cov).0;
            markowitz(&est.mean, &cov, *target)
        }
        BacktestRule::Shrinkage { target } => {
            let est = MomentEstimate::from_data(train.data());
            let cov = moments::regularize_if_needed(&estimators::ledoit_wolf_constant_corr(train)?.sigma).0;
            markowitz(&est.mean, &cov, *target)
        }
        BacktestRule::Resampled { target, replicates } => {
            let r = frontier::resampled_weights(train, *target, *replicates, bounds, seed)?;
            let note =
                (r.replaced > 0).then(|| format!("{} of {} replicate targets replaced", r.replaced, r.replicates));
            Ok(Fitted {
                w: r.weights.w,
                lambda: None,
                note,
            })
        }
        BacktestRule::Npeb {
            model,
            grid,
            replicates,
        } => {
            let ir = match model.spec() {
                None => InformationRatioBootstrap::new(train, u_train, bounds, *replicates, seed)?,
                Some(spec) => {
                    let excess = npeb::excess_panel(train, u_train)?;
                    let fit = timeseries::fit_srg_garch(&excess, Some(u_train), &spec)?;
                    let (mu_n, v_n) = fit.predictive_moments();
                    let sigma_n = linalg::symmetrize(&(&v_n - &mu_n * mu_n.transpose()));
                    let draws = timeseries::residual_bootstrap(&fit, *replicates, seed);
                    let reps: Vec<(Vector, Matrix)> = draws.iter().map(|rows| fit.replicate_moments(rows)).collect();
                    let boot = BootstrapReward::from_moments(&mu_n, &sigma_n, &reps, bounds)?;
                    InformationRatioBootstrap::from_parts(mu_n, v_n, boot, bounds, excess.data().amax())?
                }
            };
            let sel = ir.select_lambda(grid)?;
            Ok(Fitted {
                w: sel.best.estimate.w_star.w,
                lambda: Some(sel.lambda_star),
                note: None,
            })
        }
        BacktestRule::EqualWeight => {
            let k = train.n_assets();
            Ok(Fitted {
                w: Vector::from_element(k, 1.0 / k as f64),
                lambda: None,
                note: None,
            })
        }
        BacktestRule::HoldBenchmark => Err(Error::InvalidParameter("handled by the caller".into())),
    }
}

/// Runs `config.rule` over every period after the first `config.window`.
/// Weights for period `t` use rows `t - window .. t` only.
pub fn run_backtest(
    panel: &ReturnsPanel,
    benchmark: Option<&Benchmark>,
    config: &BacktestConfig,
) -> Result<BacktestResult> {
    let (t_total, m) = panel.data().shape();
    if config.window < 2 {
        return Err(Error::InvalidParameter("window must be at least 2".into()));
    }
    if t_total <= config.window {
        return Err(Error::PanelTooSmall {
            rows: t_total,
            min: config.window + 1,
        });
    }
    if config.universe_size == 0 {
        return Err(Error::InvalidParameter("universe must hold at least one asset".into()));
    }
    if !(config.periods_per_year > 0.0) {
        return Err(Error::InvalidParameter("periods per year must be positive".into()));
    }
    let u: Vec<f64> = match benchmark {
        Some(b) => b.series(panel)?,
        None => alloc::vec![0.0; t_total],
    };
    let hold_benchmark = matches!(config.rule, BacktestRule::HoldBenchmark);
    let market_values = match benchmark {
        Some(Benchmark::ValueWeighted(mv)) => Some(mv),
        _ => None,
    };
    if hold_benchmark && market_values.is_none() {
        return Err(Error::InvalidParameter(
            "holding the benchmark needs market values".into(),
        ));
    }
    let k = config.universe_size.min(m);
    let mut result = BacktestResult {
        rule: config.rule.name(),
        ..Default::default()
    };
    if 2 * k > config.window {
        result.warnings.push(format!(
            "universe of {k} assets exceeds half the {}-period window",
            config.window
        ));
    }

    for t in config.window..t_total {
        let start = t - config.window;
        let full_train = panel.slice_rows(start, t);
        let u_train = &u[start..t];
        let seed = rng::derive_seed(config.seed, t as u64);
        let universe: Vec<usize> = if hold_benchmark || k == m {
            (0..m).collect()
        } else if let Some(mv) = market_values {
            let row = mv.row(t - 1);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            let mut keep = order[..k].to_vec();
            keep.sort_unstable();
            keep
        } else {
            screen_by_information_ratio(&full_train, u_train, k)?
        };
        let bounds = config.bounds(universe.len());

        let (w_universe, lambda) = if hold_benchmark {
            (Benchmark::value_weights(market_values.expect("checked"), t)?, None)
        } else {
            let train = full_train.select_assets(&universe);
            match fit_period(config, &train, u_train, &bounds, seed) {
                Ok(f) => {
                    if let Some(note) = f.note {
                        result.infeasible.push(PeriodFailure {
                            period: t,
                            message: note,
                            fallback: "target replacement".into(),
                        });
                    }
                    (f.w, f.lambda)
                }
                Err(e) => {
                    result.infeasible.push(PeriodFailure {
                        period: t,
                        message: e.to_string(),
                        fallback: "equal weight".into(),
                    });
                    let n = universe.len() as f64;
                    (Vector::from_element(universe.len(), 1.0 / n), None)
                }
            }
        };
        let mut w = Vector::zeros(m);
        for (j, &i) in universe.iter().enumerate() {
            w[i] = w_universe[j];
        }
        let realized = panel.data().row(t).transpose().dot(&w);
        let e = if hold_benchmark { 0.0 } else { realized - u[t] };
        result.periods.push(t);
        result.period_labels.push(panel.period_labels()[t].clone());
        result.excess.push(e);
        result
            .cumulative
            .push(result.cumulative.last().copied().unwrap_or(0.0) + e);
        result.weights.push(w);
        result.universes.push(universe);
        result.lambdas.push(lambda);
    }
    let (ir, defined) = realized_information_ratio(&result.excess, config.periods_per_year);
    result.information_ratio = ir;
    result.ir_defined = defined;
    Ok(result)
}

/// Parameters of a synthetic market whose excess returns over an index
/// follow per-asset stochastic regressions with GARCH(1,1) errors.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub assets: usize,
    pub periods: usize,
    /// Intercepts `α_i`.
    pub alpha: Vector,
    /// Own-lag coefficients `γ_i`.
    pub gamma: Vector,
    /// Lagged-index coefficients `δ_i`.
    pub delta: Vector,
    pub garch: Vec<timeseries::GarchParams>,
    /// Common-factor share of the innovation variance.
    pub factor_share: f64,
    pub index_mean: f64,
    pub index_sd: f64,
}

impl SyntheticWorld {
    /// Draws world parameters from `seed`: monthly index mean 0.7% and
    /// s.d. 4.5%, own-lag coefficients in [0.1, 0.35], excess-return
    /// volatilities of 3 to 6% per month.
    pub fn random(assets: usize, periods: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, 0);
        let mut unif = |lo: f64, hi: f64| lo + (hi - lo) * r.random::<f64>();
        let mut alpha = Vector::zeros(assets);
        let mut gamma = Vector::zeros(assets);
        let mut delta = Vector::zeros(assets);
        let mut garch = Vec::with_capacity(assets);
        for i in 0..assets {
            alpha[i] = unif(-0.001, 0.003);
            gamma[i] = unif(0.1, 0.35);
            delta[i] = unif(-0.1, 0.1);
            let sd = unif(0.03, 0.06);
            let a = unif(0.75, 0.85);
            let b = unif(0.05, 0.12);
            garch.push(timeseries::GarchParams {
                omega: sd * sd * (1.0 - a - b),
                a,
                b,
            });
        }
        Self {
            assets,
            periods,
            alpha,
            gamma,
            delta,
            garch,
            factor_share: 0.3,
            index_mean: 0.007,
            index_sd: 0.045,
        }
    }

    /// Simulates `(asset returns, index returns)` with `r_it = u_t + e_it`,
    /// `e_it = α_i + γ_i e_{i,t-1} + δ_i u_{t-1} + s_{i,t-1} z_it` and
    /// `z_t` equicorrelated across assets. A 200-period burn-in is dropped.
    pub fn simulate(&self, seed: u64) -> Result<(ReturnsPanel, Vec<f64>)> {
        let burn = 200;
        let total = self.periods + burn;
        let m = self.assets;
        let mut r = rng::stream(seed, 1);
        let mut normal = || -> f64 { rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut r) };
        let mut e = Vector::zeros(m);
        let mut eps = Vector::zeros(m);
        let mut h: Vec<f64> = self.garch.iter().map(|g| g.omega / (1.0 - g.persistence())).collect();
        let mut u_prev = self.index_mean;
        let mut data = Matrix::zeros(self.periods, m);
        let mut u = Vec::with_capacity(self.periods);
        let load = libm::sqrt(self.factor_share);
        let idio = libm::sqrt(1.0 - self.factor_share);
        for t in 0..total {
            let u_t = self.index_mean + self.index_sd * normal();
            let f = normal();
            for i in 0..m {
                let g = &self.garch[i];
                h[i] = g.omega + g.a * h[i] + g.b * eps[i] * eps[i];
                eps[i] = libm::sqrt(h[i]) * (load * f + idio * normal());
                e[i] = self.alpha[i] + self.gamma[i] * e[i] + self.delta[i] * u_prev + eps[i];
            }
            if t >= burn {
                let row = t - burn;
                for i in 0..m {
                    data[(row, i)] = u_t + e[i];
                }
                u.push(u_t);
            }
            u_prev = u_t;
        }
        let labels = (0..self.periods).map(|t| format!("t{t:04}")).collect();
        let assets = (0..m).map(|i| format!("a{i:02}")).collect();
        Ok((ReturnsPanel::new(data, labels, assets)?, u))
    }
}
