use thiserror::Error;

/// Errors raised by the RMG library.
#[derive(Debug, Error)]
pub enum RmgError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: String, message: String },

    #[error("load error at row {row}, column `{column}`: {message}")]
    Load {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("all-zero panel: normalization scale is undefined")]
    ZeroPanel,

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("degenerate spectrum: bulk level v_bar_1 = {v_bar_1:.6e} is not positive")]
    DegenerateSpectrum { v_bar_1: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error(
        "no admissible overlap root (A0 = {a0:.6e}, A1 = {a1:.6e}, D^2 = {d_sq:.6e}, candidates = {candidates:?})"
    )]
    NoAdmissibleRoot {
        a0: f64,
        a1: f64,
        d_sq: f64,
        candidates: Vec<f64>,
    },

    #[error("non-positive eigen-level after step: v0 = {v0:.6e}, v1 = {v1:.6e}")]
    NonPositiveLevel { v0: f64, v1: f64 },

    #[error("degenerate market level: A0 = {0:.6e}")]
    DegenerateMarketLevel(f64),

    #[error("non-finite log-likelihood at t = {t} (v0 = {v0:.6e}, v1 = {v1:.6e})")]
    NonFiniteLikelihood { t: usize, v0: f64, v1: f64 },

    #[error("recursion failed at t = {t}: {source}")]
    RecursionAt {
        t: usize,
        #[source]
        source: Box<RmgError>,
    },

    #[error("zero variance in volatility path")]
    ConstantVolatility,

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RmgError>;

impl RmgError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        RmgError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn csv(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        RmgError::Csv {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}
