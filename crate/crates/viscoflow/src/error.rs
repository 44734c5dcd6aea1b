use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on user-supplied arguments was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The direct factorization detected a (numerically) singular matrix.
    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    /// The factorization succeeded but the solution did not meet the
    /// residual bound even after iterative refinement.
    #[error("linear solve residual {achieved:.3e} exceeds bound {bound:.3e}")]
    ResidualBound { achieved: f64, bound: f64 },

    /// A Newton step could not be computed.
    #[error("SSN step failed at iteration {iteration}: {source}")]
    StepFailed {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    /// A randomized verification suite could not produce an admissible
    /// sample within its draw budget.
    #[error("no admissible random state found in {draws} draws")]
    SeedFailure { draws: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
