use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Inputs live on different grids or have the wrong length.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A scalar or linear solve failed to reach its tolerance.
    #[error("numerical failure in {context}: {detail}")]
    Numerical { context: &'static str, detail: String },

    /// Newton iteration for one time step did not converge.
    #[error("step failed at t = {t}: residual {residual:e} after {iterations} iterations")]
    Step {
        t: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("trajectory aborted at step {step}: {source}")]
    Trajectory {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid value for `{key}`: {msg}")]
    Validation { key: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn numerical(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Numerical {
            context,
            detail: detail.into(),
        }
    }

    pub(crate) fn validation(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
