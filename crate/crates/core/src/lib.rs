//! Mean-variance portfolio optimization when the means and covariances of
//! asset returns are unknown.
//!
//! The centerpiece is [`npeb`]: the mean-variance objective
//! `E(wᵀr) - λ Var(wᵀr)` is rewritten as a family of standard problems
//! `min λ E(wᵀr)² - η E(wᵀr)` indexed by `η`, each solved by quadratic
//! programming, with the outer maximization over `η` done by Brent's method.
//! Plug-in, shrinkage, Black-Litterman and resampled baselines live in
//! [`estimators`] and [`frontier`]; [`simlab`] and [`backtest`] reproduce
//! simulation and rolling-window comparisons.
//!
//! The crate is `no_std` (with `alloc`). Enable `parallel` to spread
//! replicates over a rayon pool; results are identical either way.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod backtest;
pub mod error;
pub mod estimators;
pub mod frontier;
pub mod linalg;
pub mod moments;
pub mod npeb;
pub mod optimize;
pub mod qp;
pub mod rng;
pub mod simlab;
pub mod special;
pub mod timeseries;

mod par;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use moments::{MomentEstimate, ReturnsPanel};
