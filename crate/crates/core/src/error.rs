use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Newton inversion did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergent { iterations: usize, residual: f64 },

    #[error("singular Jacobian (condition number {condition:e})")]
    SingularJacobian { condition: f64 },

    #[error("non-finite state at t = {t} s")]
    NonFinite { t: f64 },

    #[error("time {t} s outside profile domain [{start}, {end}]")]
    OutOfProfileDomain { t: f64, start: f64, end: f64 },

    #[error("series of {len} samples is shorter than the {window}-sample window")]
    SeriesTooShort { len: usize, window: usize },

    #[error("injection amplitude is zero")]
    NoInjection,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors raised by numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergent { .. }
                | Error::SingularJacobian { .. }
                | Error::NonFinite { .. }
                | Error::NoInjection
        )
    }
}
