//! Return panels and sample moments.
//!
//! Covariances use divisor `n` (maximum likelihood), not `n - 1`, so that
//! `second_moment - mean meanᵀ == cov` holds exactly.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// Ridge added to a sample covariance whose Cholesky factorization fails.
pub const DEFAULT_RIDGE: f64 = 0.005;

/// T×m matrix of simple per-period returns with period and asset labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    data: Matrix,
    period_labels: Vec<String>,
    asset_labels: Vec<String>,
}

impl ReturnsPanel {
    pub fn new(data: Matrix, period_labels: Vec<String>, asset_labels: Vec<String>) -> Result<Self> {
        check_panel(&data, &period_labels, &asset_labels, true)?;
        Ok(Self {
            data,
            period_labels,
            asset_labels,
        })
    }

    /// Panel of excess returns or returns in other units, where the simple
    /// return bound `r > -1` does not apply. Entries must still be finite.
    pub fn unrestricted(data: Matrix, period_labels: Vec<String>, asset_labels: Vec<String>) -> Result<Self> {
        check_panel(&data, &period_labels, &asset_labels, false)?;
        Ok(Self {
            data,
            period_labels,
            asset_labels,
        })
    }

    /// `unrestricted` with generated labels.
    pub fn unrestricted_matrix(data: Matrix) -> Result<Self> {
        let periods = (0..data.nrows()).map(|t| format!("t{t}")).collect();
        let assets = (0..data.ncols()).map(|j| format!("a{j}")).collect();
        Self::unrestricted(data, periods, assets)
    }

    /// Builds a panel with generated labels (`t0, t1, ...` and `a0, a1, ...`).
    pub fn from_matrix(data: Matrix) -> Result<Self> {
        let periods = (0..data.nrows()).map(|t| format!("t{t}")).collect();
        let assets = (0..data.ncols()).map(|j| format!("a{j}")).collect();
        Self::new(data, periods, assets)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let m = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidPanel("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_matrix(Matrix::from_row_slice(rows.len(), m, &flat))
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn n_periods(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.data.ncols()
    }

    pub fn period_labels(&self) -> &[String] {
        &self.period_labels
    }

    pub fn asset_labels(&self) -> &[String] {
        &self.asset_labels
    }

    /// Rows `range` as a new panel.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            data: self.data.rows(start, end - start).into_owned(),
            period_labels: self.period_labels[start..end].to_vec(),
            asset_labels: self.asset_labels.clone(),
        }
    }

    /// Columns in `assets` (in the given order) as a new panel.
    pub fn select_assets(&self, assets: &[usize]) -> Self {
        Self {
            data: self.data.select_columns(assets),
            period_labels: self.period_labels.clone(),
            asset_labels: assets.iter().map(|&j| self.asset_labels[j].clone()).collect(),
        }
    }
}

fn check_panel(data: &Matrix, period_labels: &[String], asset_labels: &[String], simple_returns: bool) -> Result<()> {
    if data.ncols() == 0 {
        return Err(Error::InvalidPanel("panel has no assets".into()));
    }
    if period_labels.len() != data.nrows() {
        return Err(Error::DimensionMismatch {
            expected: data.nrows(),
            found: period_labels.len(),
        });
    }
    if asset_labels.len() != data.ncols() {
        return Err(Error::DimensionMismatch {
            expected: data.ncols(),
            found: asset_labels.len(),
        });
    }
    for t in 0..data.nrows() {
        for j in 0..data.ncols() {
            let r = data[(t, j)];
            if !r.is_finite() {
                return Err(Error::InvalidPanel(format!("non-finite return at row {t}, column {j}")));
            }
            if simple_returns && r <= -1.0 {
                return Err(Error::InvalidPanel(format!(
                    "return {r} at row {t}, column {j} is not above -1"
                )));
            }
        }
    }
    Ok(())
}

/// Sample mean, covariance and second-moment matrix of a set of returns.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub mean: Vector,
    pub cov: Matrix,
    pub second_moment: Matrix,
    pub n_obs: usize,
}

impl MomentEstimate {
    /// Moments of the rows of `data` selected by `rows` (repeats allowed).
    pub fn from_rows(data: &Matrix, rows: &[usize]) -> Self {
        let m = data.ncols();
        let n = rows.len() as f64;
        let mut mean = Vector::zeros(m);
        for &t in rows {
            for j in 0..m {
                mean[j] += data[(t, j)];
            }
        }
        mean /= n;
        let mut cov = Matrix::zeros(m, m);
        let mut second = Matrix::zeros(m, m);
        for &t in rows {
            for i in 0..m {
                let ri = data[(t, i)];
                let di = ri - mean[i];
                for j in 0..=i {
                    let rj = data[(t, j)];
                    cov[(i, j)] += di * (rj - mean[j]);
                    second[(i, j)] += ri * rj;
                }
            }
        }
        for i in 0..m {
            for j in 0..=i {
                cov[(i, j)] /= n;
                second[(i, j)] /= n;
                cov[(j, i)] = cov[(i, j)];
                second[(j, i)] = second[(i, j)];
            }
        }
        Self {
            mean,
            cov,
            second_moment: second,
            n_obs: rows.len(),
        }
    }

    /// Moments of every row of `data`.
    pub fn from_data(data: &Matrix) -> Self {
        let rows: Vec<usize> = (0..data.nrows()).collect();
        Self::from_rows(data, &rows)
    }
}

pub fn sample_moments(panel: &ReturnsPanel) -> Result<MomentEstimate> {
    if panel.n_periods() < 2 {
        return Err(Error::PanelTooSmall {
            rows: panel.n_periods(),
            min: 2,
        });
    }
    Ok(MomentEstimate::from_data(panel.data()))
}

/// `cov + ridge * I`.
pub fn regularize_cov(cov: &Matrix, ridge: f64) -> Matrix {
    let n = cov.nrows();
    cov + Matrix::identity(n, n) * ridge
}

/// Adds [`DEFAULT_RIDGE`] only when `cov` has no Cholesky factorization.
/// Returns the (possibly shifted) matrix and whether the ridge was applied.
pub fn regularize_if_needed(cov: &Matrix) -> (Matrix, bool) {
    if linalg::is_positive_definite(cov) {
        (cov.clone(), false)
    } else {
        (regularize_cov(cov, DEFAULT_RIDGE), true)
    }
}
