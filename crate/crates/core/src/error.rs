use thiserror::Error;

/// Errors raised across the library.
///
/// The CLI maps [`Error::NumericalFailure`] and [`Error::NonConvergent`] to
/// exit status 2; everything else is a usage problem.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error(
        "quadrature did not converge after {levels} levels (estimate {value:e}, error {error:e})"
    )]
    NonConvergent {
        value: f64,
        error: f64,
        levels: usize,
    },
}

impl Error {
    /// True for failures caused by the numerics rather than by the caller.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalFailure(_) | Error::NonConvergent { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
