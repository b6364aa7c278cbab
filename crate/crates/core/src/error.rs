use thiserror::Error;

pub type Result<T, E = FppiError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FppiError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {context} at row {row}")]
    NonFinite { context: &'static str, row: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// SPD factorization hit a pivot below the singularity threshold.
    #[error("matrix is singular or not positive definite (pivot {pivot:e} at index {index})")]
    Singular { index: usize, pivot: f64 },

    /// The region carries no usable prediction signal: it is empty, or the
    /// filtered prediction has zero variance on it.
    #[error("degenerate region: {0}")]
    DegenerateRegion(&'static str),

    #[error("gradient descent did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        last_iterate: Vec<f64>,
    },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FppiError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        FppiError::InvalidArgument(msg.into())
    }
}

impl FppiError {
    /// Process exit status used by the command-line front end: 2 for
    /// malformed input or configuration, 3 for degenerate or empty data,
    /// 4 for optimizer non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            FppiError::Empty(_) | FppiError::DegenerateRegion(_) | FppiError::Singular { .. } => 3,
            FppiError::NonConvergence { .. } => 4,
            _ => 2,
        }
    }
}
