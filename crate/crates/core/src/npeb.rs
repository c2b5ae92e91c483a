//! Mean-variance optimization through the η-reparametrization
//!
//! ```text
//!     w(η) = argmin { λ wᵀV w - η wᵀμ : 1ᵀw = 1, lower <= w <= upper }
//!     C(η) = E(wᵀr) - λ Var(wᵀr)   maximized over η
//! ```
//!
//! with the reward evaluated either at point estimates of `(μ_n, V_n)` or by
//! the bootstrap (the NPEB rule).
//!
//! `w(η)` depends on `η` only through `t = η/λ`, and for fixed bounds it is
//! piecewise linear in `t`. [`WeightPath`] stores that path exactly, so one
//! parametric solve per bootstrap replicate serves every `η` and every `λ`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::LU;

use crate::error::{Error, Result};
use crate::frontier::{Bounds, WeightVector};
use crate::linalg::{self, Matrix, Vector};
use crate::moments::{MomentEstimate, ReturnsPanel};
use crate::optimize::{self, BracketPolicy, LineMaximum};
use crate::par;
use crate::qp::{self, QpProblem, QpStatus};
use crate::rng;

/// Default number of bootstrap replicates.
pub const DEFAULT_REPLICATES: usize = 500;

/// Inputs of the inner problem for a given `η`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaProblem {
    pub mu_n: Vector,
    pub v_n: Matrix,
    pub lambda: f64,
    pub bounds: Bounds,
}

impl EtaProblem {
    pub fn new(mu_n: Vector, v_n: Matrix, lambda: f64, bounds: Bounds) -> Result<Self> {
        let p = Self {
            mu_n,
            v_n,
            lambda,
            bounds,
        };
        p.validate()?;
        Ok(p)
    }

    /// No-short-sale problem.
    pub fn long_only(mu_n: Vector, v_n: Matrix, lambda: f64) -> Result<Self> {
        let m = mu_n.len();
        Self::new(mu_n, v_n, lambda, Bounds::long_only(m))
    }

    pub fn unconstrained(mu_n: Vector, v_n: Matrix, lambda: f64) -> Result<Self> {
        let m = mu_n.len();
        Self::new(mu_n, v_n, lambda, Bounds::unbounded(m))
    }

    /// Empirical `μ_n = r̄`, `V_n = n⁻¹ Σ r_t r_tᵀ` of a panel.
    pub fn empirical(panel: &ReturnsPanel, lambda: f64, bounds: Bounds) -> Result<Self> {
        let est = MomentEstimate::from_data(panel.data());
        Self::new(est.mean, est.second_moment, lambda, bounds)
    }

    pub fn dim(&self) -> usize {
        self.mu_n.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.dim();
        if self.v_n.shape() != (m, m) || self.bounds.dim() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: if self.v_n.nrows() != m {
                    self.v_n.nrows()
                } else {
                    self.bounds.dim()
                },
            });
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn qp(&self, eta: f64) -> QpProblem {
        QpProblem::with_budget(&self.v_n * (2.0 * self.lambda), &self.mu_n * -eta)
            .bounds(self.bounds.lower.clone(), self.bounds.upper.clone())
    }

    /// Default initial bracket width `η₀ = 2λ(1 + 2λ max|μ_i|)`.
    pub fn initial_width(&self) -> f64 {
        let max_abs = self.mu_n.iter().fold(0.0_f64, |a, &x| a.max(x.abs()));
        2.0 * self.lambda * (1.0 + 2.0 * self.lambda * max_abs)
    }

    /// Reward `wᵀμ_n + λ(wᵀμ_n)² - λ wᵀV_n w` of fixed weights.
    pub fn reward_of(&self, w: &Vector) -> f64 {
        let mean = w.dot(&self.mu_n);
        mean + self.lambda * mean * mean - self.lambda * linalg::quad_form(&self.v_n, w)
    }
}

/// `A = μᵀV⁻¹1`, `B = μᵀV⁻¹μ`, `C = 1ᵀV⁻¹1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbcScalars {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl AbcScalars {
    pub fn new(mu: &Vector, v: &Matrix) -> Result<Self> {
        let chol = linalg::cholesky(v).ok_or(Error::NotPositiveDefinite)?;
        let ones = Vector::from_element(mu.len(), 1.0);
        let inv_one = chol.solve(&ones);
        let inv_mu = chol.solve(mu);
        Ok(Self {
            a: mu.dot(&inv_one),
            b: mu.dot(&inv_mu),
            c: ones.dot(&inv_one),
        })
    }

    /// `B - A²/C`.
    pub fn excess(&self) -> f64 {
        self.b - self.a * self.a / self.c
    }

    /// Coefficients `(α, β, γ)` of the unconstrained reward
    /// `C(η) = αη² + βη + γ` at point estimates.
    pub fn reward_quadratic(&self, lambda: f64) -> (f64, f64, f64) {
        let e = self.excess();
        let ac = self.a / self.c;
        let alpha = e * (e - 1.0) / (4.0 * lambda);
        let beta = (0.5 / lambda + ac) * e;
        let gamma = ac + lambda * (self.a * self.a - self.c) / (self.c * self.c);
        (alpha, beta, gamma)
    }
}

fn regularized(v: &Matrix) -> Matrix {
    if linalg::is_positive_definite(v) {
        return v.clone();
    }
    let scale = v.diagonal().iter().fold(1.0_f64, |a, &d| a.max(d.abs()));
    v + Matrix::identity(v.nrows(), v.ncols()) * (qp::SEMIDEFINITE_RIDGE * scale)
}

/// Solution of the inner problem at a single `η`, by the closed form when
/// unbounded and by quadratic programming otherwise.
pub fn weight_for_eta(problem: &EtaProblem, eta: f64) -> Result<WeightVector> {
    problem.validate()?;
    if problem.bounds.is_unbounded() {
        let (g, h) = unconstrained_line(&problem.mu_n, &problem.v_n)?;
        let w = g + h * (eta / problem.lambda);
        return Ok(WeightVector::new(w, "eta"));
    }
    let sol = qp::solve_qp(&problem.qp(eta))?.into_result()?;
    Ok(WeightVector::new(sol.w, "eta"))
}

/// `w(t) = g + t h` with `g = V⁻¹1/C`, `h = V⁻¹(μ - (A/C)1) / 2`.
fn unconstrained_line(mu: &Vector, v: &Matrix) -> Result<(Vector, Vector)> {
    let chol = linalg::cholesky(v).ok_or(Error::NotPositiveDefinite)?;
    let m = mu.len();
    let inv_one = chol.solve(&Vector::from_element(m, 1.0));
    let inv_mu = chol.solve(mu);
    let c = inv_one.sum();
    let a = mu.dot(&inv_one);
    let g = &inv_one / c;
    let h = (inv_mu - &inv_one * (a / c)) * 0.5;
    Ok((g, h))
}

/// Point-estimate reward `C(η)`.
pub fn reward_point(problem: &EtaProblem, eta: f64) -> Result<f64> {
    let w = weight_for_eta(problem, eta)?;
    Ok(problem.reward_of(&w.w))
}

/// One linear piece `w(t) = w0 + t w1` for `t >= start`.
#[derive(Debug, Clone, PartialEq)]
struct Segment {
    start: f64,
    w0: Vector,
    w1: Vector,
}

/// Exact solution path `t ↦ argmin { wᵀVw - t wᵀμ : 1ᵀw = 1, bounds }` over
/// all real `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPath {
    segments: Vec<Segment>,
    line: bool,
}

impl WeightPath {
    pub fn new(mu: &Vector, v: &Matrix, bounds: &Bounds) -> Result<Self> {
        let v = regularized(v);
        if bounds.is_unbounded() {
            let (g, h) = unconstrained_line(mu, &v)?;
            return Ok(Self {
                segments: vec![Segment {
                    start: f64::NEG_INFINITY,
                    w0: g,
                    w1: h,
                }],
                line: true,
            });
        }
        // t < 0 is the path for -μ read backwards.
        let ahead = trace_path(mu, &v, bounds)?;
        let behind = trace_path(&-mu, &v, bounds)?;
        let mut segments: Vec<Segment> = Vec::with_capacity(ahead.len() + behind.len());
        for k in (0..behind.len()).rev() {
            let start = behind.get(k + 1).map_or(f64::NEG_INFINITY, |s| -s.start);
            segments.push(Segment {
                start,
                w0: behind[k].w0.clone(),
                w1: -&behind[k].w1,
            });
        }
        segments.extend(ahead);
        Ok(Self { segments, line: false })
    }

    pub fn weights_at(&self, t: f64) -> Vector {
        let s = &self.segments[self.segment_index(t)];
        &s.w0 + &s.w1 * t
    }

    fn segment_index(&self, t: f64) -> usize {
        self.segments.partition_point(|s| s.start <= t).saturating_sub(1)
    }

    /// Breakpoints in `t`.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.start).collect()
    }

    /// True for the single affine line of an unbounded problem.
    pub fn is_line(&self) -> bool {
        self.line
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Slot {
    Free,
    Lower,
    Upper,
}

/// Pieces of the path for `t >= 0`.
fn trace_path(mu: &Vector, v: &Matrix, bounds: &Bounds) -> Result<Vec<Segment>> {
    let m = mu.len();
    let q = v * 2.0;
    let start = qp::solve_qp(
        &QpProblem::with_budget(q.clone(), Vector::zeros(m)).bounds(bounds.lower.clone(), bounds.upper.clone()),
    )?;
    if start.status != QpStatus::Optimal {
        return Err(match start.status {
            QpStatus::Infeasible => Error::Infeasible,
            _ => Error::MaxIterations(start.iterations),
        });
    }
    let mut slots = vec![Slot::Free; m];
    for &(i, side) in &start.active_set {
        slots[i] = match side {
            qp::BoundSide::Lower => Slot::Lower,
            qp::BoundSide::Upper => Slot::Upper,
        };
    }
    for i in 0..m {
        if bounds.lower[i] == bounds.upper[i] {
            slots[i] = Slot::Lower;
        }
    }

    let mut segments: Vec<Segment> = Vec::new();
    let mut t = 0.0_f64;
    let cap = 20 * m + 50;
    for _ in 0..cap {
        let (w0, w1, y0, y1) = segment_solution(&q, mu, bounds, &slots)?;
        if let Some(last) = segments.last_mut().filter(|s| s.start == t) {
            last.w0 = w0.clone();
            last.w1 = w1.clone();
        } else {
            segments.push(Segment {
                start: t,
                w0: w0.clone(),
                w1: w1.clone(),
            });
        }
        let z0 = &q * &w0 + Vector::from_element(m, y0);
        let z1 = &q * &w1 - mu + Vector::from_element(m, y1);
        let scale = 1.0 + t.abs();
        let mut next: Option<(f64, usize, Slot)> = None;
        let mut consider = |hit: f64, i: usize, to: Slot| {
            let hit = hit.max(t);
            if next.is_none_or(|(h, _, _)| hit < h) {
                next = Some((hit, i, to));
            }
        };
        // The budget row needs at least one free coordinate.
        let n_free = slots.iter().filter(|&&s| s == Slot::Free).count();
        for i in 0..m {
            let tiny = 1e-13 * (1.0 + w0[i].abs());
            match slots[i] {
                Slot::Free if n_free > 1 && (w1[i] * scale).abs() > tiny => {
                    if w1[i] < 0.0 && bounds.lower[i].is_finite() {
                        consider((bounds.lower[i] - w0[i]) / w1[i], i, Slot::Lower);
                    } else if w1[i] > 0.0 && bounds.upper[i].is_finite() {
                        consider((bounds.upper[i] - w0[i]) / w1[i], i, Slot::Upper);
                    }
                }
                Slot::Free => {}
                _ if bounds.lower[i] == bounds.upper[i] => {}
                Slot::Lower => {
                    if z1[i] < 0.0 {
                        consider(-z0[i] / z1[i], i, Slot::Free);
                    }
                }
                Slot::Upper => {
                    if z1[i] > 0.0 {
                        consider(-z0[i] / z1[i], i, Slot::Free);
                    }
                }
            }
        }
        match next {
            None => return Ok(segments),
            Some((hit, i, to)) => {
                t = hit;
                slots[i] = to;
            }
        }
    }
    Err(Error::MaxIterations(cap))
}

/// Solves the equality-constrained problem on the free variables with the
/// others held at their bounds. Returns `w = w0 + t w1` and the budget
/// multiplier `y = y0 + t y1`.
fn segment_solution(q: &Matrix, mu: &Vector, bounds: &Bounds, slots: &[Slot]) -> Result<(Vector, Vector, f64, f64)> {
    let m = mu.len();
    let free: Vec<usize> = (0..m).filter(|&i| slots[i] == Slot::Free).collect();
    let mut w0 = Vector::zeros(m);
    for i in 0..m {
        match slots[i] {
            Slot::Lower => w0[i] = bounds.lower[i],
            Slot::Upper => w0[i] = bounds.upper[i],
            Slot::Free => {}
        }
    }
    let k = free.len();
    if k == 0 {
        return Err(Error::DegenerateFrontier(0.0));
    }
    let fixed_sum: f64 = w0.sum();
    if k == 1 {
        // The budget pins a lone free coordinate; its slope is exactly zero.
        let i = free[0];
        w0[i] = 1.0 - fixed_sum;
        let qw = q * &w0;
        return Ok((w0, Vector::zeros(m), -qw[i], mu[i]));
    }
    let qw = q * &w0;
    let mut kkt = Matrix::zeros(k + 1, k + 1);
    let mut rhs = Matrix::zeros(k + 1, 2);
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            kkt[(a, b)] = q[(i, j)];
        }
        kkt[(a, k)] = 1.0;
        kkt[(k, a)] = 1.0;
        rhs[(a, 0)] = -qw[i];
        rhs[(a, 1)] = mu[i];
    }
    rhs[(k, 0)] = 1.0 - fixed_sum;
    let sol = LU::new(kkt).solve(&rhs).ok_or(Error::RankDeficient)?;
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(Error::RankDeficient);
    }
    let mut w1 = Vector::zeros(m);
    for (a, &i) in free.iter().enumerate() {
        w0[i] = sol[(a, 0)];
        w1[i] = sol[(a, 1)];
    }
    Ok((w0, w1, sol[(k, 0)], sol[(k, 1)]))
}

/// Per-segment scalars of one replicate against fixed true moments:
/// `wᵀμ = a0 + t a1` and `wᵀΣw = q0 + t q1 + t² q2`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SegmentMoments {
    start: f64,
    a0: f64,
    a1: f64,
    q0: f64,
    q1: f64,
    q2: f64,
}

impl SegmentMoments {
    fn new(s: &Segment, mu: &Vector, sigma: &Matrix) -> Self {
        let sw1 = sigma * &s.w1;
        Self {
            start: s.start,
            a0: s.w0.dot(mu),
            a1: s.w1.dot(mu),
            q0: linalg::quad_form(sigma, &s.w0),
            q1: 2.0 * s.w0.dot(&sw1),
            q2: s.w1.dot(&sw1),
        }
    }

    fn eval(&self, t: f64) -> (f64, f64) {
        (self.a0 + t * self.a1, self.q0 + t * (self.q1 + t * self.q2))
    }
}

/// Maximum of `c0 + c1 t + c2 t²` over the closure of `(lo, hi)` at finite
/// endpoints and the vertex.
fn quadratic_max(c: [f64; 3], lo: f64, hi: f64) -> (f64, f64) {
    let f = |t: f64| c[0] + t * (c[1] + t * c[2]);
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for t in [lo, hi] {
        if t.is_finite() && f(t) > best.1 {
            best = (t, f(t));
        }
    }
    if c[2] < 0.0 {
        let v = -c[1] / (2.0 * c[2]);
        if v > lo && v < hi && f(v) > best.1 {
            best = (v, f(v));
        }
    }
    best
}

/// Exact maximum of the point reward along a path.
fn scan_point(path: &WeightPath, problem: &EtaProblem) -> (f64, f64) {
    let lambda = problem.lambda;
    let segs = &path.segments;
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for (k, s) in segs.iter().enumerate() {
        let hi = segs.get(k + 1).map_or(f64::INFINITY, |n| n.start);
        let vw1 = &problem.v_n * &s.w1;
        let a0 = s.w0.dot(&problem.mu_n);
        let a1 = s.w1.dot(&problem.mu_n);
        let q0 = linalg::quad_form(&problem.v_n, &s.w0);
        let q1 = 2.0 * s.w0.dot(&vw1);
        let q2 = s.w1.dot(&vw1);
        let c = [
            a0 + lambda * (a0 * a0 - q0),
            a1 + lambda * (2.0 * a0 * a1 - q1),
            lambda * (a1 * a1 - q2),
        ];
        let cand = quadratic_max(c, s.start, hi);
        if cand.1 > best.1 {
            best = cand;
        }
    }
    best
}

/// Mean and variance of a rule's return, split as in
/// `Var(wᵀr) = E(wᵀΣw) + Var(wᵀμ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnMoments {
    pub mean: f64,
    /// `mean_b(w_bᵀΣ w_b)`.
    pub within: f64,
    /// `var_b(w_bᵀμ)` (divisor B).
    pub between: f64,
}

impl ReturnMoments {
    pub fn variance(&self) -> f64 {
        self.within + self.between
    }

    pub fn reward(&self, lambda: f64) -> f64 {
        self.mean - lambda * self.variance()
    }
}

/// Bootstrap reward estimator. The panel's empirical `(μ̂, Σ̂)` play the
/// role of the true moments; replicate `b` refits the rule on a resample.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapReward {
    mu_hat: Vector,
    sigma_hat: Matrix,
    paths: Vec<WeightPath>,
    moments: Vec<Vec<SegmentMoments>>,
    /// `B - A²/C` of each replicate (unbounded problems only).
    excess: Vec<f64>,
    replicates: usize,
    failed: usize,
}

impl BootstrapReward {
    /// `b` resamples of the panel rows; replicate `k` uses `rng::stream(seed, k)`.
    pub fn new(panel: &ReturnsPanel, bounds: &Bounds, b: usize, seed: u64) -> Result<Self> {
        if b < 2 {
            return Err(Error::InvalidParameter(
                "bootstrap needs at least two replicates".into(),
            ));
        }
        let n = panel.n_periods();
        let draws = par::map_indexed(b, |k| {
            let mut r = rng::stream(seed, k as u64);
            rng::resample_indices(&mut r, n)
        });
        Self::from_indices(panel, bounds, &draws)
    }

    /// Replicates built from explicit row sets.
    pub fn from_indices(panel: &ReturnsPanel, bounds: &Bounds, draws: &[Vec<usize>]) -> Result<Self> {
        if panel.n_periods() == 0 {
            return Err(Error::PanelTooSmall { rows: 0, min: 1 });
        }
        if bounds.dim() != panel.n_assets() {
            return Err(Error::DimensionMismatch {
                expected: panel.n_assets(),
                found: bounds.dim(),
            });
        }
        let truth = MomentEstimate::from_data(panel.data());
        let replicates = par::map_indexed(draws.len(), |k| {
            let est = MomentEstimate::from_rows(panel.data(), &draws[k]);
            (est.mean, est.second_moment)
        });
        Self::from_moments(&truth.mean, &truth.cov, &replicates, bounds)
    }

    /// Replicates given directly as `(μ_b, V_b)` pairs, scored against the
    /// moments `(mu, sigma)` treated as true.
    pub fn from_moments(mu: &Vector, sigma: &Matrix, replicates: &[(Vector, Matrix)], bounds: &Bounds) -> Result<Self> {
        let m = mu.len();
        if sigma.shape() != (m, m) || bounds.dim() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: bounds.dim(),
            });
        }
        if replicates.len() < 2 {
            return Err(Error::InvalidParameter(
                "bootstrap needs at least two replicates".into(),
            ));
        }
        let unbounded = bounds.is_unbounded();
        let built = par::map_indexed(replicates.len(), |k| {
            let (mean, second) = &replicates[k];
            if mean.len() != m || second.shape() != (m, m) {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: mean.len(),
                });
            }
            let path = WeightPath::new(mean, second, bounds)?;
            let excess = if unbounded {
                AbcScalars::new(mean, &regularized(second))?.excess()
            } else {
                f64::NAN
            };
            Ok::<_, Error>((path, excess))
        });
        let mut paths = Vec::with_capacity(replicates.len());
        let mut excess = Vec::new();
        let mut failed = 0;
        let mut last_err = None;
        for p in built {
            match p {
                Ok((p, e)) => {
                    paths.push(p);
                    if unbounded {
                        excess.push(e);
                    }
                }
                Err(e) => {
                    failed += 1;
                    last_err = Some(e);
                }
            }
        }
        if 2 * failed > replicates.len() {
            return Err(match last_err {
                Some(_) => Error::TooManyFailures {
                    failed,
                    total: replicates.len(),
                },
                None => Error::Infeasible,
            });
        }
        let moments = paths
            .iter()
            .map(|p| p.segments.iter().map(|s| SegmentMoments::new(s, mu, sigma)).collect())
            .collect();
        Ok(Self {
            mu_hat: mu.clone(),
            sigma_hat: sigma.clone(),
            paths,
            moments,
            excess,
            replicates: replicates.len(),
            failed,
        })
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn failed(&self) -> usize {
        self.failed
    }

    pub fn truth(&self) -> (&Vector, &Matrix) {
        (&self.mu_hat, &self.sigma_hat)
    }

    /// Every replicate path is a single line (unbounded problems).
    pub fn is_line(&self) -> bool {
        self.paths.iter().all(WeightPath::is_line)
    }

    /// Replicate weights at `t = η/λ`.
    pub fn replicate_weights(&self, t: f64) -> Vec<Vector> {
        self.paths.iter().map(|p| p.weights_at(t)).collect()
    }

    /// Bootstrap mean and variance decomposition of the rule at `t = η/λ`.
    pub fn moments_at(&self, t: f64) -> ReturnMoments {
        let mut means = Vec::with_capacity(self.moments.len());
        let mut quads = Vec::with_capacity(self.moments.len());
        for segs in &self.moments {
            let k = segs.partition_point(|s| s.start <= t).saturating_sub(1);
            let (a, q) = segs[k].eval(t);
            means.push(a);
            quads.push(q);
        }
        ReturnMoments {
            mean: linalg::mean(&means),
            within: linalg::mean(&quads),
            between: linalg::variance(&means),
        }
    }

    /// Bootstrap estimate of `E(wᵀr) - λ Var(wᵀr)` at `η`.
    pub fn reward(&self, eta: f64, lambda: f64) -> f64 {
        self.moments_at(eta / lambda).reward(lambda)
    }

    /// Exact maximum of the reward over `t`: on each interval between
    /// replicate breakpoints the reward is a quadratic in `t`. Returns
    /// `(t, reward)` with the reward re-evaluated directly.
    fn scan(&self, lambda: f64) -> (f64, f64) {
        let bn = self.moments.len() as f64;
        // Running sums of a0, a1, a0², a0a1, a1², q0, q1, q2.
        let mut sums = [0.0; 8];
        let add = |sums: &mut [f64; 8], m: &SegmentMoments, sign: f64| {
            let terms = [m.a0, m.a1, m.a0 * m.a0, m.a0 * m.a1, m.a1 * m.a1, m.q0, m.q1, m.q2];
            for (acc, x) in sums.iter_mut().zip(terms) {
                *acc += sign * x;
            }
        };
        let mut events: Vec<(f64, usize, usize)> = Vec::new();
        for (b, segs) in self.moments.iter().enumerate() {
            add(&mut sums, &segs[0], 1.0);
            events.extend((1..segs.len()).map(|k| (segs[k].start, b, k)));
        }
        events.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let mut best = (0.0, f64::NEG_INFINITY);
        let mut lo = f64::NEG_INFINITY;
        let mut e = 0;
        loop {
            let hi = events.get(e).map_or(f64::INFINITY, |ev| ev.0);
            if hi > lo {
                let [sa0, sa1, s00, s01, s11, q0, q1, q2] = sums.map(|x| x / bn);
                let c = [
                    sa0 - lambda * (q0 + s00 - sa0 * sa0),
                    sa1 - lambda * (q1 + 2.0 * (s01 - sa0 * sa1)),
                    -lambda * (q2 + s11 - sa1 * sa1),
                ];
                let cand = quadratic_max(c, lo, hi);
                if cand.1 > best.1 {
                    best = cand;
                }
            }
            if e == events.len() {
                break;
            }
            lo = hi;
            while e < events.len() && events[e].0 == hi {
                let (_, b, k) = events[e];
                add(&mut sums, &self.moments[b][k - 1], -1.0);
                add(&mut sums, &self.moments[b][k], 1.0);
                e += 1;
            }
        }
        (best.0, self.moments_at(best.0).reward(lambda))
    }

    /// Bootstrap average of `(B - A²/C)(B - A²/C - 1)` over replicates.
    pub fn condition_coefficient(&self) -> Option<f64> {
        if self.excess.is_empty() {
            return None;
        }
        let terms: Vec<f64> = self.excess.iter().map(|e| e * (e - 1.0)).collect();
        Some(linalg::mean(&terms))
    }

    /// Exact coefficient of `η²` in the estimated reward when every
    /// replicate path is a single line (unbounded problems).
    fn quadratic_coefficient(&self, lambda: f64) -> Option<f64> {
        if !self.is_line() {
            return None;
        }
        let a1: Vec<f64> = self.moments.iter().map(|s| s[0].a1).collect();
        let q2: Vec<f64> = self.moments.iter().map(|s| s[0].q2).collect();
        Some(-(linalg::mean(&q2) + linalg::variance(&a1)) / lambda)
    }
}

/// Bootstrap reward at a single `η`.
pub fn reward_bootstrap(
    panel: &ReturnsPanel,
    eta: f64,
    lambda: f64,
    bounds: &Bounds,
    b: usize,
    seed: u64,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("lambda must be positive".into()));
    }
    Ok(BootstrapReward::new(panel, bounds, b, seed)?.reward(eta, lambda))
}

/// How the reward being maximized was estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    PointEstimate,
    Bootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpebDiagnostics {
    /// `E{(B - A²/C)(B - A²/C - 1)}` when the moments admit it.
    pub condition_coefficient: Option<f64>,
    pub brent_iterations: usize,
    pub doublings: usize,
    pub interval: (f64, f64),
    /// The exact segment scan found a higher reward than Brent.
    pub scan_improved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpebEstimate {
    pub eta_star: f64,
    pub w_star: WeightVector,
    pub reward: f64,
    pub mode: RewardMode,
    pub replicates: usize,
    pub diagnostics: NpebDiagnostics,
}

/// Brent maximization of `objective` over `η` with the given bracketing.
pub fn maximize_over_eta<F: FnMut(f64) -> f64>(objective: F, policy: &BracketPolicy) -> LineMaximum {
    optimize::maximize_bracketed(objective, policy)
}

fn bracket_for(problem: &EtaProblem) -> BracketPolicy {
    let width = problem.initial_width();
    if problem.bounds.is_unbounded() {
        BracketPolicy::real_line(width)
    } else {
        BracketPolicy::half_line(width)
    }
}

fn diagnostics(line: &LineMaximum, coefficient: Option<f64>) -> NpebDiagnostics {
    NpebDiagnostics {
        condition_coefficient: coefficient,
        brent_iterations: line.iterations,
        doublings: line.doublings,
        interval: line.interval,
        scan_improved: false,
    }
}

/// Maximizes the point-estimate reward `C(η)` (the Bayes rule when
/// `(μ_n, V_n)` are posterior moments).
pub fn optimize_point(problem: &EtaProblem) -> Result<NpebEstimate> {
    problem.validate()?;
    let path = WeightPath::new(&problem.mu_n, &problem.v_n, &problem.bounds)?;
    let lambda = problem.lambda;
    let mut coefficient = None;
    if problem.bounds.is_unbounded() {
        let abc = AbcScalars::new(&problem.mu_n, &regularized(&problem.v_n))?;
        let e = abc.excess();
        coefficient = Some(e * (e - 1.0));
        let (alpha, _, _) = abc.reward_quadratic(lambda);
        if alpha >= 0.0 {
            return Err(Error::UnboundedReward(alpha));
        }
    }
    let line = maximize_over_eta(
        |eta| problem.reward_of(&path.weights_at(eta / lambda)),
        &bracket_for(problem),
    );
    let mut diag = diagnostics(&line, coefficient);
    let mut eta_star = line.x;
    let mut w = path.weights_at(eta_star / lambda);
    let mut reward = problem.reward_of(&w);
    if !path.is_line() {
        // The reward can be multimodal under bounds; Brent only finds a local maximum.
        let (t, _) = scan_point(&path, problem);
        let w_scan = path.weights_at(t);
        let r_scan = problem.reward_of(&w_scan);
        if r_scan > reward + 1e-12 * (1.0 + reward.abs()) {
            eta_star = t * lambda;
            w = w_scan;
            reward = r_scan;
            diag.scan_improved = true;
        }
    }
    Ok(NpebEstimate {
        eta_star,
        reward,
        w_star: WeightVector::new(w, "point"),
        mode: RewardMode::PointEstimate,
        replicates: 0,
        diagnostics: diag,
    })
}

/// NPEB weights for one `λ` given prebuilt bootstrap replicates and the
/// full-sample problem the final weights are computed from.
pub fn optimize_bootstrap(
    boot: &BootstrapReward,
    problem: &EtaProblem,
    full_path: &WeightPath,
) -> Result<NpebEstimate> {
    problem.validate()?;
    let lambda = problem.lambda;
    let mut coefficient = None;
    if problem.bounds.is_unbounded() {
        coefficient = boot.condition_coefficient();
        if let Some(alpha) = boot.quadratic_coefficient(lambda) {
            if alpha >= 0.0 {
                return Err(Error::UnboundedReward(alpha));
            }
        }
    }
    let line = maximize_over_eta(|eta| boot.reward(eta, lambda), &bracket_for(problem));
    let mut diag = diagnostics(&line, coefficient);
    let (mut eta_star, mut reward) = (line.x, line.value);
    if !boot.is_line() {
        let (t, r_scan) = boot.scan(lambda);
        if r_scan > reward + 1e-12 * (1.0 + reward.abs()) {
            eta_star = t * lambda;
            reward = r_scan;
            diag.scan_improved = true;
        }
    }
    let w = full_path.weights_at(eta_star / lambda);
    Ok(NpebEstimate {
        eta_star,
        w_star: WeightVector::new(w, "npeb"),
        reward,
        mode: RewardMode::Bootstrap,
        replicates: boot.replicates,
        diagnostics: diag,
    })
}

/// The NPEB rule on a panel: bootstrap reward maximized over `η`, weights
/// from the full-sample empirical moments at `η*`.
pub fn npeb(panel: &ReturnsPanel, lambda: f64, bounds: &Bounds, b: usize, seed: u64) -> Result<NpebEstimate> {
    let problem = EtaProblem::empirical(panel, lambda, bounds.clone())?;
    let boot = BootstrapReward::new(panel, bounds, b, seed)?;
    let full = WeightPath::new(&problem.mu_n, &problem.v_n, bounds)?;
    optimize_bootstrap(&boot, &problem, &full)
}

/// Default `λ` grid `{2^i : i = -3, ..., 6}`.
pub fn default_lambda_grid() -> Vec<f64> {
    (-3..=6).map(|i| libm::ldexp(1.0, i)).collect()
}

/// Excess returns `r_t - r_0t·1` of a panel over a benchmark series.
pub fn excess_panel(panel: &ReturnsPanel, benchmark: &[f64]) -> Result<ReturnsPanel> {
    if benchmark.len() != panel.n_periods() {
        return Err(Error::DimensionMismatch {
            expected: panel.n_periods(),
            found: benchmark.len(),
        });
    }
    let mut data = panel.data().clone();
    for (i, mut row) in data.row_iter_mut().enumerate() {
        row.add_scalar_mut(-benchmark[i]);
    }
    ReturnsPanel::unrestricted(data, panel.period_labels().to_vec(), panel.asset_labels().to_vec())
}

/// Bootstrap information ratio of the NPEB rule at one `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationRatio {
    pub lambda: f64,
    pub ratio: f64,
    pub excess_mean: f64,
    pub excess_sd: f64,
    pub estimate: NpebEstimate,
}

/// Prebuilt bootstrap over excess returns, shared by every `λ`.
#[derive(Debug, Clone)]
pub struct InformationRatioBootstrap {
    mu_n: Vector,
    v_n: Matrix,
    bounds: Bounds,
    boot: BootstrapReward,
    full_path: WeightPath,
    scale: f64,
}

impl InformationRatioBootstrap {
    /// Working i.i.d. model: moments and row resamples of the excess panel.
    pub fn new(panel: &ReturnsPanel, benchmark: &[f64], bounds: &Bounds, b: usize, seed: u64) -> Result<Self> {
        let excess = excess_panel(panel, benchmark)?;
        let boot = BootstrapReward::new(&excess, bounds, b, seed)?;
        let est = MomentEstimate::from_data(excess.data());
        let scale = excess.data().amax();
        Self::from_parts(est.mean, est.second_moment, boot, bounds, scale)
    }

    /// Any model of the excess returns: predictive `(μ_n, V_n)` and a
    /// bootstrap built against them. `scale` is the typical magnitude of an
    /// excess return, used to recognise a zero mean.
    pub fn from_parts(mu_n: Vector, v_n: Matrix, boot: BootstrapReward, bounds: &Bounds, scale: f64) -> Result<Self> {
        let full_path = WeightPath::new(&mu_n, &v_n, bounds)?;
        Ok(Self {
            mu_n,
            v_n,
            bounds: bounds.clone(),
            boot,
            full_path,
            scale: scale.max(1e-300),
        })
    }

    /// Fits `w_λ` by NPEB on excess returns, then estimates
    /// `E(w_λᵀr - r_0) / √Var(w_λᵀr - r_0)` from the same replicates.
    pub fn evaluate(&self, lambda: f64) -> Result<InformationRatio> {
        let problem = EtaProblem::new(self.mu_n.clone(), self.v_n.clone(), lambda, self.bounds.clone())?;
        let estimate = optimize_bootstrap(&self.boot, &problem, &self.full_path)?;
        let moments = self.boot.moments_at(estimate.eta_star / lambda);
        let sd = libm::sqrt(moments.variance().max(0.0));
        let ratio = if moments.mean.abs() <= 1e-14 * self.scale {
            0.0
        } else if sd < 1e-12 {
            return Err(Error::ZeroVariance);
        } else {
            moments.mean / sd
        };
        Ok(InformationRatio {
            lambda,
            ratio,
            excess_mean: moments.mean,
            excess_sd: sd,
            estimate,
        })
    }

    /// Picks the `λ` with the largest bootstrap information ratio; ties go
    /// to the larger (more risk-averse) `λ`.
    pub fn select_lambda(&self, grid: &[f64]) -> Result<LambdaSelection> {
        if grid.is_empty() {
            return Err(Error::InvalidParameter("lambda grid is empty".into()));
        }
        let results = par::map_indexed(grid.len(), |k| self.evaluate(grid[k]));
        let mut best: Option<InformationRatio> = None;
        let mut table = Vec::with_capacity(grid.len());
        let mut last_err = None;
        for (k, r) in results.into_iter().enumerate() {
            match r {
                Ok(r) => {
                    table.push((grid[k], Some(r.ratio)));
                    let better = match &best {
                        None => true,
                        Some(b) => r.ratio > b.ratio || (r.ratio == b.ratio && r.lambda > b.lambda),
                    };
                    if better {
                        best = Some(r);
                    }
                }
                Err(e) => {
                    table.push((grid[k], None));
                    last_err = Some(e);
                }
            }
        }
        match best {
            Some(best) => Ok(LambdaSelection {
                lambda_star: best.lambda,
                best,
                table,
            }),
            None => Err(last_err.unwrap_or(Error::ZeroVariance)),
        }
    }
}

pub fn information_ratio_bootstrap(
    panel: &ReturnsPanel,
    benchmark: &[f64],
    lambda: f64,
    bounds: &Bounds,
    b: usize,
    seed: u64,
) -> Result<f64> {
    InformationRatioBootstrap::new(panel, benchmark, bounds, b, seed)?
        .evaluate(lambda)
        .map(|ir| ir.ratio)
}

/// Outcome of the `λ` search.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSelection {
    pub lambda_star: f64,
    pub best: InformationRatio,
    /// `(λ, IR)` per grid point; `None` where the ratio was undefined.
    pub table: Vec<(f64, Option<f64>)>,
}

/// Picks the `λ` with the largest bootstrap information ratio under the
/// working i.i.d. model; ties go to the larger (more risk-averse) `λ`.
pub fn select_lambda(
    panel: &ReturnsPanel,
    benchmark: &[f64],
    grid: &[f64],
    bounds: &Bounds,
    b: usize,
    seed: u64,
) -> Result<LambdaSelection> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("lambda grid is empty".into()));
    }
    InformationRatioBootstrap::new(panel, benchmark, bounds, b, seed)?.select_lambda(grid)
}
