use thiserror::Error;

/// Errors produced anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("invalid out-degree: q={q} must satisfy 0 < q < p={p}")]
    InvalidDegree { p: usize, q: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid SNR {0}: must be >= 1 or infinite")]
    InvalidSnr(f64),

    #[error("epsilon {0} outside (0, 1)")]
    InvalidEpsilon(f64),

    #[error(
        "random projection failed the (1±{epsilon}) distortion check after {attempts} attempts \
         (best observed distortion {best_distortion:.4})"
    )]
    DistortionNotAchieved {
        epsilon: f64,
        attempts: usize,
        best_distortion: f64,
    },

    #[error("segment is empty")]
    EmptySegment,

    #[error("pooled variance {0:e} is degenerate (constant sequence?)")]
    DegenerateVariance(f64),

    #[error("no admissible split point for N={n} with delta={delta}")]
    WindowEmpty { n: usize, delta: f64 },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
