use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the tone-mapping pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {what}: {reason}")]
    Parse { what: String, reason: String },

    /// A value violates a documented invariant. `field` names the offending
    /// field or argument.
    #[error("{field} {reason}")]
    Invalid { field: &'static str, reason: String },

    /// Temperature conversion hit a pixel outside the profile's domain (count at or
    /// below the offset, or a log argument that is not above one).
    #[error("saturated pixel at index {index} (count {count}): {reason}")]
    Saturation {
        index: usize,
        count: u32,
        reason: &'static str,
    },

    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("missing {0}")]
    Missing(&'static str),

    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            reason: reason.into(),
        }
    }

    /// True for errors caused by the filesystem rather than by the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
