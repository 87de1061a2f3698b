use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian (relative residual {0:.3e})")]
    NonHermitianInput(f64),
    #[error("eigenvalue {value:.3e} outside the domain of {what}")]
    DomainError { what: &'static str, value: f64 },
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("state is singular (smallest eigenvalue {0:.3e})")]
    SingularState(f64),
    #[error("operator is not diagonalizable: {0}")]
    NonDiagonalizable(String),
    #[error("no faithful invariant state")]
    NoFaithfulInvariantState,
    #[error("span is not a *-algebra (closure residual {0:.3e})")]
    NotAnAlgebra(f64),
    #[error("block decomposition failed: {0}")]
    DecompositionFailed(String),
    #[error("block state {block} is rank deficient (smallest eigenvalue {min_eig:.3e})")]
    RankDeficientTau { block: usize, min_eig: f64 },
    #[error("optimizer did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("input is not positive semidefinite (smallest eigenvalue {0:.3e})")]
    NonPsdInput(f64),
    #[error("input is zero")]
    ZeroInput,
    #[error("spectral gap must be positive, got {0}")]
    NonpositiveGap(f64),
    #[error("constant out of range: {0}")]
    InvalidConstant(String),
    #[error("no restart produced a positive numerator")]
    SearchFailed,
    #[error("algebra is trivial ({0})")]
    TrivialAlgebra(&'static str),
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("dimension {0} too large")]
    DimensionTooLarge(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema error at \"{path}\": {msg}")]
    Schema { path: String, msg: String },
}

impl Error {
    /// True for errors caused by malformed input rather than numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::Schema { .. }
                | Error::DimensionMismatch { .. }
                | Error::NonHermitianInput(_)
                | Error::InvalidExponent(_)
                | Error::NegativeTime(_)
                | Error::NonPsdInput(_)
                | Error::ZeroInput
                | Error::InvalidConstant(_)
                | Error::DimensionTooLarge(_)
                | Error::PreconditionFailed(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
