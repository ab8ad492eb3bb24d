use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Hilbert layout: {0}")]
    InvalidLayout(String),

    #[error("Hilbert dimension {dim} exceeds the dense-storage guard of {max}")]
    DimensionGuard { dim: usize, max: usize },

    #[error("TLS index {index} out of range (1..={n_tls})")]
    TlsIndexOutOfRange { index: usize, n_tls: usize },

    #[error(
        "displacement |alpha| = {alpha_abs:.4} violates the truncation-safety rule \
         |alpha|^2 + 5|alpha| + 4 <= n_max: requires n_max >= {required}, got {n_max}"
    )]
    TruncationUnsafe {
        alpha_abs: f64,
        required: usize,
        n_max: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("integrator step size underflow at t = {t:.6e} s (h = {h:.3e} s)")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("integrator exceeded {0} steps without reaching the end time")]
    MaxStepsExceeded(usize),

    #[error("fit did not converge after {0} iterations")]
    FitNonConvergence(usize),

    #[error("rank-deficient Jacobian in fit: {0}")]
    RankDeficientJacobian(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}
