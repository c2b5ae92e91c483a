//! Markowitz efficient portfolios: closed form, box-constrained QP, frontier
//! sweeps, Michaud's resampled weights and the benchmark-relative (active)
//! variant.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::moments::{MomentEstimate, ReturnsPanel};
use crate::par;
use crate::qp::{solve_qp, QpProblem, QpStatus};
use crate::rng;

/// Portfolio weights tagged with the rule that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub w: Vector,
    pub label: String,
}

impl WeightVector {
    pub fn new(w: Vector, label: impl Into<String>) -> Self {
        Self { w, label: label.into() }
    }

    pub fn mean(&self, mu: &Vector) -> f64 {
        self.w.dot(mu)
    }

    pub fn volatility(&self, sigma: &Matrix) -> f64 {
        libm::sqrt(linalg::quad_form(sigma, &self.w).max(0.0))
    }
}

/// Box bounds on individual weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vector,
    pub upper: Vector,
}

impl Bounds {
    pub fn unbounded(m: usize) -> Self {
        Self {
            lower: Vector::from_element(m, f64::NEG_INFINITY),
            upper: Vector::from_element(m, f64::INFINITY),
        }
    }

    /// No short sales: `0 <= w_i <= 1`.
    pub fn long_only(m: usize) -> Self {
        Self {
            lower: Vector::zeros(m),
            upper: Vector::from_element(m, 1.0),
        }
    }

    pub fn is_unbounded(&self) -> bool {
        self.lower.iter().all(|l| l.is_infinite()) && self.upper.iter().all(|u| u.is_infinite())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

/// Range of `μᵀw` over `{1ᵀw = budget, lower <= w <= upper}`, found by filling
/// the budget greedily in order of decreasing (or increasing) mean.
pub fn achievable_mean_range(mu: &Vector, lower: &Vector, upper: &Vector, budget: f64) -> Option<(f64, f64)> {
    let m = mu.len();
    if lower.iter().any(|l| l.is_infinite()) {
        return Some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let room = budget - lower.sum();
    if room < -1e-12 || upper.sum() < budget - 1e-12 {
        return None;
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| mu[j].total_cmp(&mu[i]));
    let fill = |order: &[usize]| {
        let mut left = room.max(0.0);
        let mut value = lower.dot(mu);
        for &i in order {
            let take = (upper[i] - lower[i]).min(left);
            value += take * mu[i];
            left -= take;
        }
        value
    };
    let hi = fill(&order);
    order.reverse();
    let lo = fill(&order);
    Some((lo, hi))
}

fn abc(mu: &Vector, sigma: &Matrix) -> Result<(Vector, Vector, f64, f64, f64)> {
    let chol = linalg::cholesky(sigma).ok_or(Error::NotPositiveDefinite)?;
    let ones = Vector::from_element(mu.len(), 1.0);
    let inv_one = chol.solve(&ones);
    let inv_mu = chol.solve(mu);
    let a = mu.dot(&inv_one);
    let b = mu.dot(&inv_mu);
    let c = ones.dot(&inv_one);
    Ok((inv_one, inv_mu, a, b, c))
}

fn check_dims(mu: &Vector, sigma: &Matrix) -> Result<()> {
    if sigma.shape() != (mu.len(), mu.len()) {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            found: sigma.nrows(),
        });
    }
    Ok(())
}

/// Unconstrained minimum-variance portfolio with mean `target`:
/// `w = {BΣ⁻¹1 - AΣ⁻¹μ + μ*(CΣ⁻¹μ - AΣ⁻¹1)} / D`.
pub fn markowitz_closed_form(mu: &Vector, sigma: &Matrix, target: f64) -> Result<WeightVector> {
    check_dims(mu, sigma)?;
    let (inv_one, inv_mu, a, b, c) = abc(mu, sigma)?;
    let d = b * c - a * a;
    if d <= 1e-12 {
        return Err(Error::DegenerateFrontier(d));
    }
    let w = (&inv_one * b - &inv_mu * a + (&inv_mu * c - &inv_one * a) * target) / d;
    Ok(WeightVector::new(w, "markowitz"))
}

/// Global minimum-variance portfolio `Σ⁻¹1 / C`.
pub fn global_minimum_variance(sigma: &Matrix) -> Result<WeightVector> {
    let ones = Vector::from_element(sigma.nrows(), 1.0);
    let inv_one = linalg::spd_solve(sigma, &ones)?;
    let c = inv_one.sum();
    Ok(WeightVector::new(inv_one / c, "gmv"))
}

/// Minimum-variance portfolio with mean `target` under box bounds.
pub fn markowitz_qp(mu: &Vector, sigma: &Matrix, target: f64, bounds: &Bounds) -> Result<WeightVector> {
    check_dims(mu, sigma)?;
    if bounds.dim() != mu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            found: bounds.dim(),
        });
    }
    let m = mu.len();
    let problem = QpProblem::with_budget(sigma * 2.0, Vector::zeros(m))
        .bounds(bounds.lower.clone(), bounds.upper.clone())
        .equality(mu, target);
    let sol = solve_qp(&problem)?;
    match sol.status {
        QpStatus::Optimal => Ok(WeightVector::new(sol.w, "markowitz")),
        QpStatus::Infeasible => Err(target_infeasible(mu, &bounds.lower, &bounds.upper, 1.0, target)),
        QpStatus::MaxIterations => Err(Error::MaxIterations(sol.iterations)),
    }
}

fn target_infeasible(mu: &Vector, lower: &Vector, upper: &Vector, budget: f64, target: f64) -> Error {
    match achievable_mean_range(mu, lower, upper, budget) {
        Some((lo, hi)) => Error::TargetInfeasible {
            target,
            min_achievable: lo,
            max_achievable: hi,
        },
        None => Error::Infeasible,
    }
}

/// What to do when a target mean cannot be reached under the bounds.
#[derive(Debug, Clone, PartialEq)]
pub enum InfeasiblePolicy {
    /// Move the target to the nearest achievable mean (`min(μ*, max μ_i)`
    /// under no short sales).
    TargetReplacement,
    /// Hold the given benchmark weights.
    BenchmarkFallback(Vector),
    /// Equal weights on the `k` assets with the largest estimated means.
    EqualWeightTopK(usize),
}

/// Weights from a policy-aware solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyWeights {
    pub weights: WeightVector,
    /// Target actually used (after any replacement).
    pub effective_target: f64,
    /// Whether the policy had to intervene.
    pub fallback: bool,
}

/// `markowitz_qp`, with infeasible targets handled by `policy`.
pub fn markowitz_with_policy(
    mu: &Vector,
    sigma: &Matrix,
    target: f64,
    bounds: &Bounds,
    policy: &InfeasiblePolicy,
) -> Result<PolicyWeights> {
    match markowitz_qp(mu, sigma, target, bounds) {
        Ok(weights) => Ok(PolicyWeights {
            weights,
            effective_target: target,
            fallback: false,
        }),
        Err(Error::TargetInfeasible {
            min_achievable,
            max_achievable,
            ..
        }) => {
            let weights = match policy {
                InfeasiblePolicy::TargetReplacement => {
                    let t = target.clamp(min_achievable, max_achievable);
                    let mut w = markowitz_qp(mu, sigma, t, bounds)?;
                    w.label = "markowitz_replaced".to_string();
                    return Ok(PolicyWeights {
                        weights: w,
                        effective_target: t,
                        fallback: true,
                    });
                }
                InfeasiblePolicy::BenchmarkFallback(wb) => WeightVector::new(wb.clone(), "benchmark"),
                InfeasiblePolicy::EqualWeightTopK(k) => equal_weight_top_k(mu, *k),
            };
            let effective_target = weights.mean(mu);
            Ok(PolicyWeights {
                weights,
                effective_target,
                fallback: true,
            })
        }
        Err(e) => Err(e),
    }
}

/// Equal weights on the `k` largest entries of `mu` (lowest index wins ties).
pub fn equal_weight_top_k(mu: &Vector, k: usize) -> WeightVector {
    let m = mu.len();
    let k = k.clamp(1, m.max(1));
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| mu[j].total_cmp(&mu[i]));
    let mut w = Vector::zeros(m);
    for &i in &order[..k] {
        w[i] = 1.0 / k as f64;
    }
    WeightVector::new(w, "equal_weight_top_k")
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierPoint {
    pub target_mu: f64,
    pub w: WeightVector,
    pub mu: f64,
    pub sigma: f64,
}

/// Frontier sweep; targets that could not be solved are kept with the reason.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Frontier {
    pub points: Vec<FrontierPoint>,
    pub skipped: Vec<(f64, Error)>,
}

pub fn efficient_frontier(mu: &Vector, sigma: &Matrix, targets: &[f64], bounds: &Bounds) -> Frontier {
    let mut frontier = Frontier::default();
    for &t in targets {
        match markowitz_qp(mu, sigma, t, bounds) {
            Ok(w) => frontier.points.push(FrontierPoint {
                target_mu: t,
                mu: w.mean(mu),
                sigma: w.volatility(sigma),
                w,
            }),
            Err(e) => frontier.skipped.push((t, e)),
        }
    }
    frontier
}

/// `n` equally spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Michaud's resampled efficient weights with replicate bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampledWeights {
    pub weights: WeightVector,
    pub replicates: usize,
    /// Replicates whose target had to be replaced.
    pub replaced: usize,
    /// Replicates that produced no weights at all.
    pub failed: usize,
}

/// Average of Markowitz weights over `b` bootstrap resamples of the panel
/// rows. Replicate `k` draws from `rng::stream(seed, k)`.
pub fn resampled_weights(
    panel: &ReturnsPanel,
    target: f64,
    b: usize,
    bounds: &Bounds,
    seed: u64,
) -> Result<ResampledWeights> {
    if b == 0 {
        return Err(Error::InvalidParameter(
            "at least one bootstrap replicate is required".into(),
        ));
    }
    let n = panel.n_periods();
    let draws = par::map_indexed(b, |k| {
        let mut r = rng::stream(seed, k as u64);
        rng::resample_indices(&mut r, n)
    });
    resampled_weights_from_indices(panel, target, &draws, bounds)
}

/// Resampled weights for explicitly given bootstrap row sets.
pub fn resampled_weights_from_indices(
    panel: &ReturnsPanel,
    target: f64,
    draws: &[Vec<usize>],
    bounds: &Bounds,
) -> Result<ResampledWeights> {
    let m = panel.n_assets();
    if draws.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one bootstrap replicate is required".into(),
        ));
    }
    let outcomes = par::map_indexed(draws.len(), |k| {
        let est = MomentEstimate::from_rows(panel.data(), &draws[k]);
        markowitz_with_policy(
            &est.mean,
            &est.cov,
            target,
            bounds,
            &InfeasiblePolicy::TargetReplacement,
        )
    });
    let mut sum = Vector::zeros(m);
    let mut ok = 0usize;
    let mut replaced = 0usize;
    let mut last_err = None;
    for outcome in outcomes {
        match outcome {
            Ok(p) => {
                sum += &p.weights.w;
                ok += 1;
                replaced += p.fallback as usize;
            }
            Err(e) => last_err = Some(e),
        }
    }
    if ok == 0 {
        return Err(last_err.unwrap_or(Error::Infeasible));
    }
    Ok(ResampledWeights {
        weights: WeightVector::new(sum / ok as f64, "michaud"),
        replicates: draws.len(),
        replaced,
        failed: draws.len() - ok,
    })
}

/// Benchmark-relative problem: `w = w_B + w̃`, minimize `w̃ᵀΣw̃` subject to
/// `w̃ᵀμ = target_excess`, `1ᵀw̃ = 0` and `-w_B <= w̃ <= c - w_B`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveConstraints {
    pub benchmark_weights: Vector,
    pub cap: f64,
    pub target_excess: f64,
}

impl ActiveConstraints {
    pub const DEFAULT_CAP: f64 = 0.1;

    pub fn new(benchmark_weights: Vector, target_excess: f64) -> Self {
        Self {
            benchmark_weights,
            cap: Self::DEFAULT_CAP,
            target_excess,
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.benchmark_weights.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: self.benchmark_weights.len(),
            });
        }
        if !(self.cap > 0.0) {
            return Err(Error::InvalidParameter("position cap must be positive".into()));
        }
        if self.benchmark_weights.iter().any(|&w| w < -1e-12) || (self.benchmark_weights.sum() - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidParameter(
                "benchmark weights must lie on the simplex".into(),
            ));
        }
        Ok(())
    }
}

/// Solves the active problem and returns the total weights `w_B + w̃`.
pub fn active_qp(mu: &Vector, sigma: &Matrix, constraints: &ActiveConstraints) -> Result<WeightVector> {
    check_dims(mu, sigma)?;
    let m = mu.len();
    constraints.validate(m)?;
    let wb = &constraints.benchmark_weights;
    let lower = -wb;
    // A benchmark position above the cap can only be reduced.
    let upper = Vector::from_element(m, constraints.cap) - wb;
    let upper = upper.zip_map(&Vector::zeros(m), |u, z| u.max(z));
    let mut a_eq = Matrix::from_element(2, m, 1.0);
    a_eq.row_mut(1).copy_from(&mu.transpose());
    let problem = QpProblem {
        q: sigma * 2.0,
        c: Vector::zeros(m),
        a_eq,
        b_eq: Vector::from_column_slice(&[0.0, constraints.target_excess]),
        lower: lower.clone(),
        upper: upper.clone(),
    };
    let sol = solve_qp(&problem)?;
    match sol.status {
        QpStatus::Optimal => Ok(WeightVector::new(wb + sol.w, "active")),
        QpStatus::Infeasible => Err(target_infeasible(mu, &lower, &upper, 0.0, constraints.target_excess)),
        QpStatus::MaxIterations => Err(Error::MaxIterations(sol.iterations)),
    }
}
