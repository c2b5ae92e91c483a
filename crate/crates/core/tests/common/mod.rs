#![allow(dead_code)]

use mvopt_core::rng;
use mvopt_core::{Matrix, ReturnsPanel, Vector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn v(x: &[f64]) -> Vector {
    Vector::from_column_slice(x)
}

pub fn normal(r: &mut impl Rng) -> f64 {
    StandardNormal.sample(r)
}

/// Random SPD matrix `GGᵀ/m + floor·I`.
pub fn random_spd(m: usize, floor: f64, r: &mut impl Rng) -> Matrix {
    let g = Matrix::from_fn(m, m, |_, _| normal(r));
    (&g * g.transpose()) / m as f64 + Matrix::identity(m, m) * floor
}

pub fn random_vector(m: usize, scale: f64, r: &mut impl Rng) -> Vector {
    Vector::from_fn(m, |_, _| scale * normal(r))
}

/// Rows `mu + L z` with `L` the Cholesky factor of `sigma`.
pub fn normal_panel(mu: &Vector, sigma: &Matrix, n: usize, seed: u64) -> ReturnsPanel {
    let mut r = rng::stream(seed, 0);
    let l = sigma.clone().cholesky().unwrap().l();
    let m = mu.len();
    let mut data = Matrix::zeros(n, m);
    for t in 0..n {
        let z = Vector::from_fn(m, |_, _| normal(&mut r));
        let row = mu + &l * z;
        data.row_mut(t).copy_from(&row.transpose());
    }
    ReturnsPanel::unrestricted_matrix(data).unwrap()
}

/// Every point of the simplex `{w >= 0, 1ᵀw = 1}` with coordinates on a grid
/// of the given step, for `m` in 1..=3.
pub fn simplex_grid(m: usize, step: f64) -> Vec<Vector> {
    let k = (1.0 / step).round() as usize;
    let mut out = Vec::new();
    match m {
        1 => out.push(v(&[1.0])),
        2 => {
            for i in 0..=k {
                let a = i as f64 / k as f64;
                out.push(v(&[a, 1.0 - a]));
            }
        }
        3 => {
            for i in 0..=k {
                for j in 0..=(k - i) {
                    let a = i as f64 / k as f64;
                    let b = j as f64 / k as f64;
                    out.push(v(&[a, b, (1.0 - a - b).max(0.0)]));
                }
            }
        }
        _ => panic!("grid only for m <= 3"),
    }
    out
}

pub fn quad(a: &Matrix, x: &Vector) -> f64 {
    (x.transpose() * a * x)[(0, 0)]
}
