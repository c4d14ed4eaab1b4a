use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("{op}: domain error: {msg}")]
    Domain { op: &'static str, msg: String },

    /// The argument is valid mathematically but outside the range this crate evaluates.
    #[error("{op}: argument {arg} outside the supported range")]
    Unsupported { op: &'static str, arg: f64 },

    #[error("{op}: exponent {exponent} overflows f64")]
    Range { op: &'static str, exponent: f64 },

    /// Derivatives of the Black-Scholes function requested at zero variance.
    #[error("{op}: singular point (total variance {w})")]
    Singular { op: &'static str, w: f64 },

    #[error("{op}: internal consistency check failed: {msg}")]
    Consistency { op: &'static str, msg: String },

    #[error(
        "covariance not positive definite: pivot {min_pivot:e} at row {row} after jitter {jitter:e} \
         ({attempts} attempts)"
    )]
    Regularization {
        row: usize,
        min_pivot: f64,
        jitter: f64,
        attempts: usize,
    },

    #[error("simulation: {0}")]
    Simulation(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            op,
            msg: msg.into(),
        }
    }

    /// True for failures that come from the numerics rather than from user input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Range { .. }
                | Error::Singular { .. }
                | Error::Consistency { .. }
                | Error::Regularization { .. }
                | Error::Simulation(_)
        )
    }
}

pub(crate) fn ensure_finite(op: &'static str, name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(op, format!("{name} must be finite, got {x}")))
    }
}
