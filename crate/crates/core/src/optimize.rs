//! Derivative-free optimizers: bracketed Brent maximization on a line and a
//! Nelder-Mead simplex minimizer.

use alloc::vec;
use alloc::vec::Vec;

const GOLDEN: f64 = 0.381_966_011_250_105_1;

/// Result of a one-dimensional maximization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineMaximum {
    pub x: f64,
    pub value: f64,
    /// Brent iterations (excluding bracketing).
    pub iterations: usize,
    /// Doublings performed while growing the bracket.
    pub doublings: usize,
    /// Final search interval.
    pub interval: (f64, f64),
}

/// How the search interval for a line maximization is grown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketPolicy {
    /// Initial interval `[start, start + width]`.
    pub start: f64,
    pub width: f64,
    /// When set, the interval never extends below `start`.
    pub bounded_below: bool,
    pub max_doublings: usize,
    /// Relative tolerance on the abscissa.
    pub rel_tol: f64,
    pub max_iterations: usize,
}

impl BracketPolicy {
    pub fn half_line(width: f64) -> Self {
        Self {
            start: 0.0,
            width,
            bounded_below: true,
            max_doublings: 60,
            rel_tol: 1e-8,
            max_iterations: 200,
        }
    }

    /// Interval centred on zero that may grow in both directions.
    pub fn real_line(width: f64) -> Self {
        Self {
            start: -width,
            width: 2.0 * width,
            bounded_below: false,
            ..Self::half_line(width)
        }
    }
}

/// Maximizes `f` by growing an interval until its midpoint beats both ends
/// (or the doubling cap is reached), then running Brent's method inside it.
/// The returned point is never worse than any point evaluated while
/// bracketing.
pub fn maximize_bracketed<F: FnMut(f64) -> f64>(mut f: F, policy: &BracketPolicy) -> LineMaximum {
    let mut lo = policy.start;
    let mut hi = policy.start + policy.width;
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    let mut mid = 0.5 * (lo + hi);
    let mut f_mid = f(mid);
    let mut best = [(lo, f_lo), (mid, f_mid), (hi, f_hi)]
        .into_iter()
        .fold((lo, f64::NEG_INFINITY), |b, p| if p.1 > b.1 { p } else { b });
    let mut doublings = 0;
    while doublings < policy.max_doublings && !(f_mid > f_lo && f_mid > f_hi) {
        let width = hi - lo;
        if f_hi >= f_lo {
            hi += width;
            f_hi = f(hi);
            if f_hi > best.1 {
                best = (hi, f_hi);
            }
        } else if policy.bounded_below {
            // Best value sits at the lower boundary side.
            break;
        } else {
            lo -= width;
            f_lo = f(lo);
            if f_lo > best.1 {
                best = (lo, f_lo);
            }
        }
        mid = 0.5 * (lo + hi);
        f_mid = f(mid);
        if f_mid > best.1 {
            best = (mid, f_mid);
        }
        doublings += 1;
    }
    let (x, value, iterations) = brent_bounded(&mut f, lo, hi, policy.rel_tol, policy.max_iterations);
    let (x, value) = if value >= best.1 { (x, value) } else { best };
    LineMaximum {
        x,
        value,
        iterations,
        doublings,
        interval: (lo, hi),
    }
}

/// Brent's method (golden section with parabolic steps) for the maximum of
/// `f` on `[a, b]`. Returns `(x, f(x), iterations)`.
pub fn brent_bounded<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    rel_tol: f64,
    max_iterations: usize,
) -> (f64, f64, usize) {
    let (mut a, mut b) = if a <= b { (a, b) } else { (b, a) };
    let abs_tol = 1e-12;
    let mut x = a + GOLDEN * (b - a);
    let mut w = x;
    let mut v = x;
    // Work with the negated function so the loop reads as minimization.
    let mut fx = -f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    let mut iter = 0;
    while iter < max_iterations {
        let xm = 0.5 * (a + b);
        let tol1 = rel_tol * x.abs() + abs_tol;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        iter += 1;
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d >= 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = -f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, -fx, iter)
}

/// Outcome of a Nelder-Mead run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexMinimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub initial_step: f64,
    pub f_tol: f64,
    pub x_tol: f64,
    pub max_evaluations: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.5,
            f_tol: 1e-10,
            x_tol: 1e-8,
            max_evaluations: 4000,
        }
    }
}

/// Minimizes `f` with the Nelder-Mead downhill simplex (standard
/// coefficients: reflection 1, expansion 2, contraction 1/2, shrink 1/2).
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, start: &[f64], opts: &NelderMeadOptions) -> SimplexMinimum {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += opts.initial_step;
        simplex.push(p);
    }
    let mut eval = |x: &[f64], count: &mut usize| {
        *count += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut evaluations = 0;
    let mut values: Vec<f64> = simplex.iter().map(|p| eval(p, &mut evaluations)).collect();
    let mut converged = false;
    while evaluations < opts.max_evaluations {
        // Stable sort keeps the ordering deterministic on ties.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = (values[n] - values[0]).abs();
        let size = simplex[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= opts.f_tol * (1.0 + values[0].abs()) && size <= opts.x_tol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|j| centroid[j] + t * (simplex[n][j] - centroid[j]))
                .collect()
        };
        let reflected = along(-1.0);
        let f_r = eval(&reflected, &mut evaluations);
        if f_r < values[0] {
            let expanded = along(-2.0);
            let f_e = eval(&expanded, &mut evaluations);
            if f_e < f_r {
                simplex[n] = expanded;
                values[n] = f_e;
            } else {
                simplex[n] = reflected;
                values[n] = f_r;
            }
            continue;
        }
        if f_r < values[n - 1] {
            simplex[n] = reflected;
            values[n] = f_r;
            continue;
        }
        let (contracted, f_c) = if f_r < values[n] {
            let c = along(-0.5);
            let fc = eval(&c, &mut evaluations);
            (c, fc)
        } else {
            let c = along(0.5);
            let fc = eval(&c, &mut evaluations);
            (c, fc)
        };
        if f_c < values[n].min(f_r) {
            simplex[n] = contracted;
            values[n] = f_c;
            continue;
        }
        for i in 1..=n {
            let p: Vec<f64> = (0..n)
                .map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]))
                .collect();
            values[i] = eval(&p, &mut evaluations);
            simplex[i] = p;
        }
    }
    let best = (0..=n).fold(0, |b, i| if values[i] < values[b] { i } else { b });
    SimplexMinimum {
        x: simplex[best].clone(),
        value: values[best],
        evaluations,
        converged,
    }
}
