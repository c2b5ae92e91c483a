use alloc::string::String;

/// Errors produced by the estimation, optimization and simulation routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("panel has {rows} rows but at least {min} are required")]
    PanelTooSmall { rows: usize, min: usize },
    #[error("invalid returns panel: {0}")]
    InvalidPanel(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("efficient frontier is degenerate (D = {0:e})")]
    DegenerateFrontier(f64),
    #[error("target {target} is not attainable (achievable range [{min_achievable}, {max_achievable}])")]
    TargetInfeasible {
        target: f64,
        min_achievable: f64,
        max_achievable: f64,
    },
    #[error("quadratic program is infeasible")]
    Infeasible,
    #[error("quadratic program hit the iteration cap ({0})")]
    MaxIterations(usize),
    #[error("Black-Litterman precision matrix is numerically singular")]
    SingularPrecision,
    #[error("posterior degrees of freedom {dof} must exceed m + 1 = {min}")]
    DegreesOfFreedomTooSmall { dof: f64, min: f64 },
    #[error("reward is unbounded in eta (quadratic coefficient {0:e} is not negative)")]
    UnboundedReward(f64),
    #[error("excess-return variance estimate is zero")]
    ZeroVariance,
    #[error("series has {len} observations but at least {min} are required")]
    SeriesTooShort { len: usize, min: usize },
    #[error("lagged regressor is constant")]
    DegenerateRegressor,
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("GARCH optimizer failed: {0}")]
    OptimizerFailed(String),
    #[error("{failed} of {total} replicates failed")]
    TooManyFailures { failed: usize, total: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
