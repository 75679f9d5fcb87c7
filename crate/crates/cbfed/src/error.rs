//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CbfedError>;

#[derive(Error, Debug)]
pub enum CbfedError {
    #[error("input has non-zero mean: |mean| = {mean_abs:.3e} exceeds 1e-12 * max|sample| = {bound:.3e}")]
    NonZeroMean { mean_abs: f64, bound: f64 },

    #[error("shape mismatch: expected {expected} samples, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("unsupported Lp exponent p = {p}; need finite p >= 1")]
    UnsupportedP { p: f64 },

    #[error("requested {requested} basis modes but only {available} are available under dealiasing")]
    TooManyModes { requested: usize, available: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("noise channel {channel} out of range (m = {m})")]
    ChannelOutOfRange { channel: usize, m: usize },

    #[error("jump size z must be nonzero")]
    ZeroJumpSize,

    #[error("expected jump count {expected:.3e} exceeds the configured cap {cap:.3e}")]
    RateBudgetExceeded { expected: f64, cap: f64 },

    #[error("solution blew up at t = {time}: ||u||_H = {norm:.3e} exceeds threshold {threshold:.3e}")]
    BlowUp { time: f64, norm: f64, threshold: f64 },

    #[error("parameters outside the validated regime: {0}")]
    OutOfRegime(String),

    #[error("regime violation: {0}")]
    Regime(String),

    #[error("config error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("trajectory lacks required records: {0}")]
    InsufficientRecords(String),

    #[error("mismatched ensemble configurations: {0}")]
    MismatchedConfigs(String),

    #[error("invalid snapshot file: {0}")]
    BadSnapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
