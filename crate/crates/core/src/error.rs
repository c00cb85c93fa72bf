use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("radius {radius} outside {domain}")]
    RadiusOutOfRange { radius: f64, domain: &'static str },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("empty cell set")]
    EmptyCellSet,

    #[error("grid function has {got} values, grid has {expected} cells")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("non-finite value at cell {0}")]
    NonFinite(usize),

    #[error("exponent p = {0} must be >= 1")]
    InvalidExponent(f64),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("weight vanishes on every cell")]
    ZeroWeight,

    #[error("functional is not finite at atom t = {0}")]
    NonFiniteFunctional(f64),

    #[error("hypothesis violated at atom t = {atom}: deviation {deviation} > bound {bound}")]
    HypothesisViolated { atom: f64, deviation: f64, bound: f64 },

    #[error("functional is not shift invariant at atom t = {atom}")]
    ShiftVariant { atom: f64 },

    #[error("vector is not mean-zero (sum = {0})")]
    NotMeanZero(f64),

    #[error("constant must be positive, got {0}")]
    NonPositiveConstant(f64),

    #[error("eigen solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("dense oracle limited to {cap} unknowns, got {size}")]
    SizeCap { size: usize, cap: usize },

    #[error("ratio ascent: {0}")]
    Ascent(String),

    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
