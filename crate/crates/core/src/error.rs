use thiserror::Error;

/// Errors raised by the numerical and exact modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    #[error("invalid parameter: {0}")]
    Invalid(String),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(
        "CFL violation at step {step} (t = {time:.6e}): dt = {dt:.6e} exceeds bound {bound:.6e} ({reason})"
    )]
    Cfl {
        step: usize,
        time: f64,
        dt: f64,
        bound: f64,
        reason: String,
    },

    /// A strict comparison of the Case-2 ladder failed.
    #[error("threshold violated at {label}: {witness}, required {relation} {bound}")]
    Threshold {
        label: String,
        witness: String,
        relation: String,
        bound: String,
    },

    #[error("ladder stalled: {0}")]
    Stall(String),

    #[error("Gronwall hypothesis fails at index {index}: {detail}")]
    Hypothesis { index: usize, detail: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Dimension(_) => "dimension",
            Error::GridMismatch { .. } => "grid-mismatch",
            Error::Invalid(_) => "invalid",
            Error::GridTooSmall(_) => "grid-too-small",
            Error::InsufficientData(_) => "insufficient-data",
            Error::Cfl { .. } => "cfl",
            Error::Threshold { .. } => "threshold",
            Error::Stall(_) => "ladder-stall",
            Error::Hypothesis { .. } => "hypothesis",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
