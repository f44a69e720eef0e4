use thiserror::Error;

/// Errors produced by the numerical and design routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("capacity guard exceeded in {context}: {requested} > {limit}")]
    Capacity {
        context: &'static str,
        requested: u128,
        limit: u128,
    },

    #[error("rank deficiency: {0}")]
    Rank(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("lift residual {residual:e} exceeds tolerance {tolerance:e}")]
    InvalidLift { residual: f64, tolerance: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("state norm {norm:e} exceeded divergence guard at step {step}")]
    Diverged { step: usize, norm: f64 },
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// True for errors caused by malformed input rather than by the numbers
    /// themselves (dimension, domain, capacity, non-finite, unsupported).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension { .. }
                | Error::Domain(_)
                | Error::Capacity { .. }
                | Error::Unsupported(_)
                | Error::NonFinite(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
