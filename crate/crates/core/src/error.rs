use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain the operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structural invariant (symmetry, range, shape) does not hold.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("singular kernel: {0}")]
    Singularity(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("configuration error: {0}")]
    Config(String),

    /// No eigenvalue reaches the band cutoff, so the eigengap has no terms.
    #[error("eigengap undefined: no eigenvalue reaches the cutoff {cutoff}")]
    UndefinedGap { cutoff: f64 },

    #[error("training diverged at step {step} (loss = {loss})")]
    Divergence { step: usize, loss: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    /// True for failures caused by the numerics rather than by the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::Singularity(_) | Error::UndefinedGap { .. }
        )
    }
}
