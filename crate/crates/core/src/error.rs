use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid basis order {k}: must lie in 1..={max}")]
    InvalidOrder { k: usize, max: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("singular Q matrix: {0}")]
    SingularQ(String),

    #[error("oracle integral did not converge: change {change:.3e} exceeds tolerance {tol:.3e}")]
    Divergence { change: f64, tol: f64 },
}

impl Error {
    /// True for failures caused by the numerics (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::DegenerateDesign(_) | Error::SingularQ(_) | Error::Divergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
