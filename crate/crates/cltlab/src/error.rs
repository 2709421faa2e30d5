//! Crate-wide error type. Variants carry enough context to print a
//! machine-readable one-line reason, which is what the CLI reports on
//! failure.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("hurst parameter {0} outside the valid range {1}")]
    HurstOutOfRange(f64, &'static str),

    #[error("correlation {0} outside [-1, 1]")]
    RhoOutOfRange(f64),

    #[error("function value at quadrature node {node} is not finite")]
    NonFiniteFunctionValue { node: f64 },

    #[error("parameter {name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },

    #[error("covariance matrix is not positive semidefinite (pivot {pivot:.3e} at index {index})")]
    NotPsd { index: usize, pivot: f64 },

    #[error("unstable time step: lambda*dt = {0} is beyond the sampler's stability bound")]
    UnstableStep(f64),

    #[error("integral of {0} did not converge; the moment appears to diverge")]
    IntegralDiverged(&'static str),

    #[error("no jump mass beyond the truncation level {eps}")]
    EmptyTail { eps: f64 },

    #[error("inner truncation too coarse: it discards a fraction {fraction:.3e} of the variance")]
    TruncationTooCoarse { fraction: f64 },

    #[error("sample variance is zero; cannot standardize")]
    ZeroVariance,

    #[error("kernel evaluation at singular point t = {t}, s = {s}")]
    SingularPoint { t: f64, s: f64 },

    #[error("jump measure is asymmetric above the truncation level: signed tail mean {mean:.3e}")]
    AsymmetricMeasure { mean: f64 },

    #[error("grid mismatch: expected {expected} points, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("direct jump simulation infeasible: expected {expected:.3e} jumps exceeds budget {budget:.3e}")]
    InfiniteActivity { expected: f64, budget: f64 },

    #[error("functional must be centered (order-zero coefficient {0} is nonzero)")]
    NotCentered(f64),

    #[error("chaos order {order} not supported here (atoms: {atoms}, limit: {limit})")]
    OrderTooLarge {
        order: usize,
        atoms: usize,
        limit: usize,
    },

    #[error("atom index {index} out of range for grid of {atoms} atoms")]
    UnknownAtom { index: usize, atoms: usize },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("rate fit needs positive abscissas and distances, got {0}")]
    NonPositiveInput(f64),

    #[error("unknown experiment {0:?}; `cltlab list` prints the registry")]
    UnknownExperiment(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config parse failure: {0}")]
    BadConfig(#[from] serde_json::Error),

    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
}
