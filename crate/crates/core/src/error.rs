use std::path::PathBuf;

/// Errors produced anywhere in the preference-learning pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is out of its allowed domain.
    #[error("configuration error: {0}")]
    Config(String),
    /// An operation was called with arguments violating its preconditions.
    #[error("usage error: {0}")]
    Usage(String),
    /// Non-finite values showed up in a loss or gradient.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Training diverged. The last parameters that produced a finite loss are attached.
    #[error("training diverged at step {step}: {reason}")]
    Diverged {
        step: usize,
        reason: String,
        last_good: Box<crate::policy::PolicyParams>,
    },
    /// A structured input could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    /// An upstream artifact does not match the hash recorded in its manifest.
    #[error("stale artifact {path}: expected sha256 {expected}, found {actual}")]
    StaleArtifact {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error is a validation failure of inputs or artifacts
    /// (as opposed to a numeric or training failure).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Usage(_) | Error::Parse { .. } | Error::StaleArtifact { .. } | Error::Io { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
