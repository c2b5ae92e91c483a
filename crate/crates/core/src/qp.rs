//! Dense convex quadratic programs with equality constraints and box bounds.
//!
//! ```text
//!     minimize     1/2 wᵀ Q w + cᵀ w
//!     subject to   A w = b
//!                  lower <= w <= upper
//! ```
//!
//! Solved by a primal active-set method. A feasible starting vertex comes from
//! a bounded-variable phase-one simplex (Bland's rule), which also detects
//! infeasibility. Every pivot and tie-break picks the lowest index, so results
//! are bitwise reproducible.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::LU;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// Ridge added to `Q` when it has no Cholesky factorization.
pub const SEMIDEFINITE_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub q: Matrix,
    pub c: Vector,
    /// Equality constraint rows; `a_eq * w = b_eq`.
    pub a_eq: Matrix,
    pub b_eq: Vector,
    pub lower: Vector,
    pub upper: Vector,
}

impl QpProblem {
    /// Problem with a single budget constraint `1ᵀw = 1` and no bounds.
    pub fn with_budget(q: Matrix, c: Vector) -> Self {
        let m = c.len();
        Self {
            q,
            c,
            a_eq: Matrix::from_element(1, m, 1.0),
            b_eq: Vector::from_element(1, 1.0),
            lower: Vector::from_element(m, f64::NEG_INFINITY),
            upper: Vector::from_element(m, f64::INFINITY),
        }
    }

    pub fn bounds(mut self, lower: Vector, upper: Vector) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn simplex_bounds(self) -> Self {
        let m = self.c.len();
        self.bounds(Vector::zeros(m), Vector::from_element(m, 1.0))
    }

    /// Appends the equality constraint `aᵀw = b`.
    pub fn equality(mut self, a: &Vector, b: f64) -> Self {
        let k = self.a_eq.nrows();
        let m = self.c.len();
        let mut rows = Matrix::zeros(k + 1, m);
        rows.rows_mut(0, k).copy_from(&self.a_eq);
        rows.row_mut(k).copy_from(&a.transpose());
        self.a_eq = rows;
        let mut rhs = Vector::zeros(k + 1);
        rhs.rows_mut(0, k).copy_from(&self.b_eq);
        rhs[k] = b;
        self.b_eq = rhs;
        self
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.dim();
        let check = |expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { expected, found })
            }
        };
        check(m, self.q.nrows())?;
        check(m, self.q.ncols())?;
        check(m, self.a_eq.ncols())?;
        check(self.a_eq.nrows(), self.b_eq.len())?;
        check(m, self.lower.len())?;
        check(m, self.upper.len())?;
        if self.a_eq.nrows() == 0 {
            return Err(Error::InvalidParameter(
                "at least one equality constraint is required".into(),
            ));
        }
        let scale = self.q.amax().max(1.0);
        if !linalg::is_symmetric(&self.q, 1e-10 * scale) {
            return Err(Error::InvalidParameter("Q is not symmetric".into()));
        }
        if self
            .lower
            .iter()
            .zip(self.upper.iter())
            .any(|(l, u)| l > u || l.is_nan() || u.is_nan())
        {
            return Err(Error::InvalidParameter("lower bound exceeds upper bound".into()));
        }
        if self
            .q
            .iter()
            .chain(self.c.iter())
            .chain(self.a_eq.iter())
            .chain(self.b_eq.iter())
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidParameter("non-finite problem data".into()));
        }
        Ok(())
    }

    pub fn objective(&self, w: &Vector) -> f64 {
        0.5 * linalg::quad_form(&self.q, w) + self.c.dot(w)
    }

    /// Largest violation of any constraint at `w`.
    pub fn max_violation(&self, w: &Vector) -> f64 {
        let eq = (&self.a_eq * w - &self.b_eq).amax();
        let bounds = (0..self.dim()).fold(0.0_f64, |acc, i| {
            acc.max(self.lower[i] - w[i]).max(w[i] - self.upper[i])
        });
        eq.max(bounds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub w: Vector,
    pub objective: f64,
    pub status: QpStatus,
    /// Bounds held active at the solution, in ascending index order.
    pub active_set: Vec<(usize, BoundSide)>,
    /// Multipliers `y` of the equality rows.
    pub eq_multipliers: Vector,
    /// Multipliers `z` of the bounds: `Qw + c + Aᵀy - z = 0`, with `z >= 0`
    /// on lower and `z <= 0` on upper active bounds.
    pub bound_multipliers: Vector,
    pub iterations: usize,
    /// Ridge added to `Q` internally (0 when `Q` was positive definite).
    pub ridge: f64,
}

impl QpSolution {
    pub fn into_result(self) -> Result<Self> {
        match self.status {
            QpStatus::Optimal => Ok(self),
            QpStatus::Infeasible => Err(Error::Infeasible),
            QpStatus::MaxIterations => Err(Error::MaxIterations(self.iterations)),
        }
    }

    /// Infinity norm of the Lagrangian gradient at the solution.
    pub fn stationarity_residual(&self, problem: &QpProblem) -> f64 {
        let r = &problem.q * &self.w + &problem.c + problem.a_eq.transpose() * &self.eq_multipliers
            - &self.bound_multipliers;
        r.amax()
    }
}

/// Primal active-set solver. Holds the working set of the last solve so a
/// sequence of problems sharing constraints (an eta sweep) can warm start.
#[derive(Debug, Clone, Default)]
pub struct ActiveSetSolver {
    /// Iteration cap; `None` means `100 * m`.
    pub max_iterations: Option<usize>,
    last: Option<Vector>,
}

impl ActiveSetSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_max_iterations(max_iterations: usize) -> Self {
        Self {
            max_iterations: Some(max_iterations),
            last: None,
        }
    }

    /// Forgets the stored warm-start point.
    pub fn reset(&mut self) {
        self.last = None;
    }

    /// Cold solve.
    pub fn solve(&mut self, problem: &QpProblem) -> Result<QpSolution> {
        problem.validate()?;
        let sol = match phase_one(problem) {
            Some(w0) => self.phase_two(problem, w0),
            None => infeasible_solution(problem),
        };
        self.last = (sol.status == QpStatus::Optimal).then(|| sol.w.clone());
        Ok(sol)
    }

    /// Solves starting from the previous optimum when it is still feasible
    /// (constraints unchanged), otherwise falls back to a cold solve.
    pub fn solve_warm(&mut self, problem: &QpProblem) -> Result<QpSolution> {
        problem.validate()?;
        match self.last.take() {
            Some(w0) if w0.len() == problem.dim() && problem.max_violation(&w0) <= feasibility_tol(problem) => {
                let sol = self.phase_two(problem, w0);
                self.last = (sol.status == QpStatus::Optimal).then(|| sol.w.clone());
                Ok(sol)
            }
            _ => self.solve(problem),
        }
    }

    fn phase_two(&self, problem: &QpProblem, mut w: Vector) -> QpSolution {
        let m = problem.dim();
        let k = problem.a_eq.nrows();
        let cap = self.max_iterations.unwrap_or(100 * m.max(1));

        let mut q = problem.q.clone();
        let mut ridge = 0.0;
        if !linalg::is_positive_definite(&q) {
            ridge = SEMIDEFINITE_RIDGE * problem.q.diagonal().amax().max(1.0);
            for i in 0..m {
                q[(i, i)] += ridge;
            }
        }
        // Work with a unit-scale objective; the minimizer is unchanged.
        let scale = q.amax().max(problem.c.amax());
        let scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };
        q /= scale;
        let c = &problem.c / scale;

        let tol = feasibility_tol(problem);
        // Working set: None = free, Some(side) = held at that bound. A bound
        // joins only if the free columns of A keep full row rank.
        let mut working: Vec<Option<BoundSide>> = vec![None; m];
        for i in 0..m {
            let side = if problem.lower[i].is_finite() && (w[i] - problem.lower[i]).abs() <= tol {
                BoundSide::Lower
            } else if problem.upper[i].is_finite() && (w[i] - problem.upper[i]).abs() <= tol {
                BoundSide::Upper
            } else {
                continue;
            };
            working[i] = Some(side);
            let free: Vec<usize> = (0..m).filter(|&j| working[j].is_none()).collect();
            if full_row_rank(&problem.a_eq, &free) {
                w[i] = match side {
                    BoundSide::Lower => problem.lower[i],
                    BoundSide::Upper => problem.upper[i],
                };
            } else {
                working[i] = None;
            }
        }

        let mut iterations = 0;
        let mut y = Vector::zeros(k);
        // Set after a full unblocked step: w minimizes over the working set.
        let mut on_minimum = false;
        loop {
            if iterations >= cap {
                return finish(
                    problem,
                    w,
                    working,
                    y,
                    iterations,
                    ridge,
                    QpStatus::MaxIterations,
                    &q,
                    &c,
                    scale,
                );
            }
            iterations += 1;

            let free: Vec<usize> = (0..m).filter(|&i| working[i].is_none()).collect();
            let g = &q * &w + &c;
            let step = match equality_step(&q, &problem.a_eq, &g, &free) {
                Some(s) => s,
                None => {
                    // Free columns lost full row rank; release the lowest
                    // held bound and retry.
                    match working.iter().position(|s| s.is_some()) {
                        Some(i) => {
                            working[i] = None;
                            continue;
                        }
                        None => {
                            return finish(
                                problem,
                                w,
                                working,
                                y,
                                iterations,
                                ridge,
                                QpStatus::Infeasible,
                                &q,
                                &c,
                                scale,
                            )
                        }
                    }
                }
            };
            y = step.y;
            let p = step.p;
            let p_norm = p.amax();
            let w_scale = 1.0 + w.amax();

            if on_minimum || p_norm <= 1e-13 * w_scale {
                on_minimum = false;
                // Stationary on the working set: check bound multipliers.
                let grad = &g + problem.a_eq.transpose() * &y;
                let mult_tol = 1e-11 * (1.0 + g.amax());
                let mut drop: Option<(usize, f64)> = None;
                for (i, side) in working.iter().enumerate() {
                    let violation = match side {
                        Some(BoundSide::Lower) => -grad[i],
                        Some(BoundSide::Upper) => grad[i],
                        None => continue,
                    };
                    if violation > mult_tol && drop.map_or(true, |(_, v)| violation > v) {
                        drop = Some((i, violation));
                    }
                }
                match drop {
                    Some((i, _)) => working[i] = None,
                    None => {
                        return finish(
                            problem,
                            w,
                            working,
                            y,
                            iterations,
                            ridge,
                            QpStatus::Optimal,
                            &q,
                            &c,
                            scale,
                        )
                    }
                }
                continue;
            }

            let mut alpha = 1.0;
            let mut blocking: Option<(usize, BoundSide)> = None;
            for (pos, &i) in free.iter().enumerate() {
                let pi = p[pos];
                let (limit, side) = if pi < 0.0 && problem.lower[i].is_finite() {
                    ((problem.lower[i] - w[i]) / pi, BoundSide::Lower)
                } else if pi > 0.0 && problem.upper[i].is_finite() {
                    ((problem.upper[i] - w[i]) / pi, BoundSide::Upper)
                } else {
                    continue;
                };
                let limit = limit.max(0.0);
                if limit < alpha {
                    alpha = limit;
                    blocking = Some((i, side));
                }
            }
            for (pos, &i) in free.iter().enumerate() {
                w[i] += alpha * p[pos];
            }
            match blocking {
                Some((i, side)) => {
                    w[i] = match side {
                        BoundSide::Lower => problem.lower[i],
                        BoundSide::Upper => problem.upper[i],
                    };
                    working[i] = Some(side);
                }
                None => on_minimum = true,
            }
        }
    }
}

/// Convenience cold solve with a fresh solver.
pub fn solve_qp(problem: &QpProblem) -> Result<QpSolution> {
    ActiveSetSolver::new().solve(problem)
}

fn feasibility_tol(problem: &QpProblem) -> f64 {
    let scale = 1.0 + problem.b_eq.amax() + problem.a_eq.amax();
    1e-11 * scale
}

fn full_row_rank(a: &Matrix, free: &[usize]) -> bool {
    if free.len() < a.nrows() {
        return false;
    }
    let af = a.select_columns(free);
    let gram = &af * af.transpose();
    let scale = gram.amax().max(f64::MIN_POSITIVE);
    match linalg::cholesky(&gram) {
        Some(ch) => ch.l().diagonal().iter().all(|d| d * d > 1e-12 * scale),
        None => false,
    }
}

struct EqualityStep {
    p: Vector,
    y: Vector,
}

/// Minimizes the quadratic model over the free variables subject to
/// `A_F p = 0` by a full-pivoting LU solve of the KKT system; returns `None`
/// when that system is singular.
fn equality_step(q: &Matrix, a: &Matrix, g: &Vector, free: &[usize]) -> Option<EqualityStep> {
    let k = a.nrows();
    let f = free.len();
    if f == 0 || !full_row_rank(a, free) {
        return None;
    }
    let n = f + k;
    let mut kkt = Matrix::zeros(n, n);
    let mut rhs = Vector::zeros(n);
    for (r, &i) in free.iter().enumerate() {
        for (c, &j) in free.iter().enumerate() {
            kkt[(r, c)] = q[(i, j)];
        }
        for e in 0..k {
            kkt[(r, f + e)] = a[(e, i)];
            kkt[(f + e, r)] = a[(e, i)];
        }
        rhs[r] = -g[i];
    }
    let sol = kkt.full_piv_lu().solve(&rhs)?;
    if sol.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let p = sol.rows(0, f).into_owned();
    let y = sol.rows(f, k).into_owned();
    Some(EqualityStep { p, y })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    problem: &QpProblem,
    w: Vector,
    working: Vec<Option<BoundSide>>,
    y: Vector,
    iterations: usize,
    ridge: f64,
    status: QpStatus,
    q_used: &Matrix,
    c_used: &Vector,
    scale: f64,
) -> QpSolution {
    let m = problem.dim();
    let grad = (q_used * &w + c_used + problem.a_eq.transpose() * &y) * scale;
    let y = y * scale;
    let mut z = Vector::zeros(m);
    let mut active_set = Vec::new();
    for (i, side) in working.iter().enumerate() {
        if let Some(side) = side {
            z[i] = grad[i];
            active_set.push((i, *side));
        }
    }
    QpSolution {
        objective: problem.objective(&w),
        w,
        status,
        active_set,
        eq_multipliers: y,
        bound_multipliers: z,
        iterations,
        ridge,
    }
}

fn infeasible_solution(problem: &QpProblem) -> QpSolution {
    let m = problem.dim();
    QpSolution {
        w: Vector::from_element(m, f64::NAN),
        objective: f64::NAN,
        status: QpStatus::Infeasible,
        active_set: Vec::new(),
        eq_multipliers: Vector::zeros(problem.a_eq.nrows()),
        bound_multipliers: Vector::zeros(m),
        iterations: 0,
        ridge: 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Position {
    Basic,
    AtLower,
    AtUpper,
    FreeZero,
}

/// Bounded-variable phase-one simplex: finds `w` with `A w = b` and
/// `lower <= w <= upper`, or `None` when no such point exists.
fn phase_one(problem: &QpProblem) -> Option<Vector> {
    let m = problem.dim();
    let k = problem.a_eq.nrows();
    let n = m + k;
    let a = &problem.a_eq;

    let mut lower = vec![0.0; n];
    let mut upper = vec![f64::INFINITY; n];
    let mut x = vec![0.0; n];
    let mut pos = vec![Position::Basic; n];
    for j in 0..m {
        lower[j] = problem.lower[j];
        upper[j] = problem.upper[j];
        if lower[j].is_finite() {
            x[j] = lower[j];
            pos[j] = Position::AtLower;
        } else if upper[j].is_finite() {
            x[j] = upper[j];
            pos[j] = Position::AtUpper;
        } else {
            pos[j] = Position::FreeZero;
        }
    }
    let mut sign = vec![1.0; k];
    for i in 0..k {
        let r = problem.b_eq[i] - (0..m).map(|j| a[(i, j)] * x[j]).sum::<f64>();
        sign[i] = if r >= 0.0 { 1.0 } else { -1.0 };
        x[m + i] = r.abs();
    }
    let column = |j: usize| -> Vector {
        if j < m {
            a.column(j).into_owned()
        } else {
            let mut e = Vector::zeros(k);
            e[j - m] = sign[j - m];
            e
        }
    };
    let cost = |j: usize| if j < m { 0.0 } else { 1.0 };
    let mut basis: Vec<usize> = (m..n).collect();
    let tol = 1e-12 * (1.0 + problem.b_eq.amax() + a.amax());
    let cap = 50 * n + 100;

    for _ in 0..cap {
        let mut bmat = Matrix::zeros(k, k);
        for (p, &j) in basis.iter().enumerate() {
            bmat.set_column(p, &column(j));
        }
        let lu = LU::new(bmat.clone());
        let cb = Vector::from_iterator(k, basis.iter().map(|&j| cost(j)));
        let pi = LU::new(bmat.transpose()).solve(&cb)?;

        let mut entering = None;
        for j in 0..n {
            let d = cost(j) - pi.dot(&column(j));
            let dir = match pos[j] {
                Position::Basic => continue,
                Position::AtLower if d < -tol => 1.0,
                Position::AtUpper if d > tol => -1.0,
                Position::FreeZero if d.abs() > tol => -d.signum(),
                _ => continue,
            };
            entering = Some((j, dir));
            break;
        }
        let Some((j, dir)) = entering else { break };

        let delta = lu.solve(&column(j))? * dir;
        let mut step = upper[j] - lower[j];
        let mut leaving: Option<(usize, Position)> = None;
        for (p, &v) in basis.iter().enumerate() {
            let dp = delta[p];
            let (limit, hit) = if dp > tol && lower[v].is_finite() {
                ((x[v] - lower[v]) / dp, Position::AtLower)
            } else if dp < -tol && upper[v].is_finite() {
                ((upper[v] - x[v]) / -dp, Position::AtUpper)
            } else {
                continue;
            };
            let limit = limit.max(0.0);
            let better = match leaving {
                None => limit < step,
                Some((lp, _)) => limit < step || (limit == step && v < basis[lp]),
            };
            if better {
                step = limit;
                leaving = Some((p, hit));
            }
        }
        if !step.is_finite() {
            return None;
        }
        x[j] += dir * step;
        for (p, &v) in basis.iter().enumerate() {
            x[v] -= step * delta[p];
        }
        match leaving {
            None => {
                pos[j] = if dir > 0.0 {
                    Position::AtUpper
                } else {
                    Position::AtLower
                };
                x[j] = if dir > 0.0 { upper[j] } else { lower[j] };
            }
            Some((p, hit)) => {
                let v = basis[p];
                x[v] = if hit == Position::AtLower { lower[v] } else { upper[v] };
                pos[v] = hit;
                pos[j] = Position::Basic;
                basis[p] = j;
            }
        }
    }

    let infeasibility: f64 = (m..n).map(|j| x[j]).sum();
    if infeasibility > 1e3 * tol {
        return None;
    }
    let mut w = Vector::from_iterator(m, x[..m].iter().copied());
    for j in 0..m {
        w[j] = w[j].clamp(problem.lower[j], problem.upper[j]);
    }
    // Absorb rounding: move the residual onto free coordinates by least norm.
    let residual = &problem.b_eq - a * &w;
    if residual.amax() > 0.0 {
        let interior: Vec<usize> = (0..m)
            .filter(|&j| w[j] > problem.lower[j] + tol && w[j] < problem.upper[j] - tol)
            .collect();
        if !interior.is_empty() {
            let ai = a.select_columns(&interior);
            let gram = &ai * ai.transpose();
            if let Some(ch) = linalg::cholesky(&gram) {
                let corr = ai.transpose() * ch.solve(&residual);
                for (p, &j) in interior.iter().enumerate() {
                    w[j] = (w[j] + corr[p]).clamp(problem.lower[j], problem.upper[j]);
                }
            }
        }
    }
    (problem.max_violation(&w) <= 1e-9 * (1.0 + problem.b_eq.amax())).then_some(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn symmetric_minimum_variance() {
        let p = QpProblem::with_budget(Matrix::identity(2, 2) * 2.0, Vector::zeros(2)).simplex_bounds();
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.w[0] - 0.5).abs() < 1e-12 && (s.w[1] - 0.5).abs() < 1e-12);
        assert!((s.objective - 0.5).abs() < 1e-12);
    }

    #[test]
    fn inverse_variance_weights() {
        // Oracle: minimize 2(w² + 4(1-w)²) by calculus: 4w - 16(1-w) = 0 → w = 0.8.
        let q = Matrix::from_diagonal(&v(&[2.0, 8.0]));
        let s = solve_qp(&QpProblem::with_budget(q, Vector::zeros(2))).unwrap();
        assert!((s.w[0] - 0.8).abs() < 1e-12 && (s.w[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn target_above_max_mean_is_infeasible() {
        let mu = v(&[0.1, 0.2, 0.3]);
        let p = QpProblem::with_budget(Matrix::identity(3, 3), Vector::zeros(3))
            .simplex_bounds()
            .equality(&mu, 0.35);
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
        assert_eq!(s.into_result(), Err(Error::Infeasible));
    }

    #[test]
    fn kkt_holds_at_bounded_solution() {
        let q = Matrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 3.0]);
        let c = v(&[-1.0, 0.5, -2.0]);
        let p = QpProblem::with_budget(q, c).bounds(v(&[0.0, 0.0, 0.0]), v(&[0.6, 1.0, 0.6]));
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!(p.max_violation(&s.w) < 1e-10);
        assert!(s.stationarity_residual(&p) < 1e-9);
        for &(i, side) in &s.active_set {
            match side {
                BoundSide::Lower => assert!(s.bound_multipliers[i] >= -1e-10),
                BoundSide::Upper => assert!(s.bound_multipliers[i] <= 1e-10),
            }
        }
    }

    #[test]
    fn semidefinite_q_gets_ridge() {
        let p = QpProblem::with_budget(Matrix::zeros(2, 2), v(&[1.0, 2.0])).simplex_bounds();
        let s = solve_qp(&p).unwrap();
        assert!(s.ridge > 0.0);
        assert!((s.w[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let q = Matrix::identity(4, 4);
        let c = v(&[5.0, -5.0, 5.0, -5.0]);
        let p = QpProblem::with_budget(q, c).simplex_bounds();
        let s = ActiveSetSolver::with_max_iterations(1).solve(&p).unwrap();
        assert_eq!(s.status, QpStatus::MaxIterations);
    }

    #[test]
    fn warm_start_matches_cold() {
        let q = Matrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 3.0]);
        let mut solver = ActiveSetSolver::new();
        for eta in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let c = v(&[-0.3, -0.1, -0.5]) * eta;
            let p = QpProblem::with_budget(q.clone(), c).simplex_bounds();
            let warm = solver.solve_warm(&p).unwrap();
            let cold = solve_qp(&p).unwrap();
            assert!((warm.w - cold.w).amax() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_problems() {
        let p = QpProblem::with_budget(Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]), Vector::zeros(2));
        assert!(solve_qp(&p).is_err());
        let p = QpProblem::with_budget(Matrix::identity(2, 2), Vector::zeros(3));
        assert!(matches!(solve_qp(&p), Err(Error::DimensionMismatch { .. })));
        let p = QpProblem::with_budget(Matrix::identity(2, 2), Vector::zeros(2)).bounds(v(&[1.0, 0.0]), v(&[0.0, 1.0]));
        assert!(solve_qp(&p).is_err());
    }
}
