use thiserror::Error;

/// Errors raised by the flux catalog, the step solvers and the flow driver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The conjugate (or another supremum) is +∞ at the requested point.
    #[error("unbounded: supremum is +infinity")]
    Unbounded,

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e}){}", step_suffix(*.step))]
    NonConverged {
        what: String,
        residual: f64,
        iterations: usize,
        step: Option<usize>,
    },

    #[error("bad configuration: {0}")]
    BadConfig(String),

    /// Steady-state data violate ∫_Ω f + ∫_Γ g = 0.
    #[error("incompatible data: compatibility integral is {integral:.3e}")]
    Incompatible { integral: f64 },

    #[error("inapplicable: {0}")]
    Inapplicable(String),
}

fn step_suffix(step: Option<usize>) -> String {
    match step {
        Some(i) => format!(" at step {i}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Attach the failing time-step index to a convergence failure.
    pub fn at_step(self, index: usize) -> Self {
        match self {
            Error::NonConverged {
                what,
                residual,
                iterations,
                ..
            } => Error::NonConverged {
                what,
                residual,
                iterations,
                step: Some(index),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
