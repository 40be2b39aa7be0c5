use thiserror::Error;

/// Unified error type for the laboratory.
///
/// Every failure mode maps to one of the process exit codes used by the
/// command-line front end: 2 for validation errors, 3 for solver failures,
/// 4 for estimates that cannot be decided at the requested resolution.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("problem size {n} exceeds dense-solver guard {max}")]
    SizeExceeded { n: usize, max: usize },

    #[error("rescale factor {b} would need samples beyond r_max (support ratio {support_ratio})")]
    ResampleOutOfRange { b: f64, support_ratio: f64 },

    #[error("no convergence after {iterations} iterations (last update {last_update:.3e})")]
    NoConvergence { iterations: usize, last_update: f64 },

    #[error("collapse detected: {0}")]
    Collapse(String),

    #[error("bracket failure: {0}")]
    BracketFailure(String),

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("ambiguous count: {0}")]
    AmbiguousCount(String),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_)
            | Error::Domain(_)
            | Error::SizeExceeded { .. }
            | Error::ResampleOutOfRange { .. }
            | Error::Config(_)
            | Error::Io(_) => 2,
            Error::NoConvergence { .. }
            | Error::Collapse(_)
            | Error::BracketFailure(_)
            | Error::Eigensolver(_) => 3,
            Error::AmbiguousCount(_) | Error::Inconclusive(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
