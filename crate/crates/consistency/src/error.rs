//! Crate-wide error type.
//!
//! Variants are grouped by which part of a run they blame, because the CLI
//! maps them to distinct exit codes: configuration problems exit 1, dataset
//! problems exit 2, and an unreachable backend exits 3.

/// Everything that can go wrong inside the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration, template, or CLI input.
    #[error("config error: {0}")]
    Config(String),

    /// Dataset file unreadable, empty, or structurally invalid.
    #[error("dataset error: {0}")]
    Dataset(String),

    /// Network-level failure talking to a live backend, after retries.
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    /// Non-retryable HTTP error status from a live backend.
    #[error("backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },

    /// Backend response that could not be interpreted.
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),

    /// The mock script has no entry for a question the run needs.
    #[error("mock script has no entry for model {model_id:?}, question {question_id:?}")]
    MissingScriptEntry {
        model_id: String,
        question_id: String,
    },

    /// A pipeline stage failed for one question.
    #[error("{stage}: {message}")]
    Stage { stage: String, message: String },

    /// Invalid input to an analysis routine.
    #[error("analysis error: {0}")]
    Analysis(String),

    /// Filesystem failure while reading or writing run artifacts.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Wraps an io::Error with the path it concerns.
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Attaches a pipeline stage label to any error, for per-question
    /// failure records.
    pub fn at_stage(self, stage: &str) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage: stage.to_string(),
                message: other.to_string(),
            },
        }
    }

    /// True when the underlying cause was a transport failure, which the
    /// CLI reports as "backend unreachable".
    pub fn is_transport(&self) -> bool {
        match self {
            Error::Transport { .. } => true,
            Error::Stage { message, .. } => message.starts_with("transport error"),
            _ => false,
        }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_wrapping_preserves_transport_detection() {
        let err = Error::Transport {
            attempts: 4,
            message: "connection refused".into(),
        };
        assert!(err.is_transport());
        let staged = err.at_stage("solve");
        assert!(staged.is_transport());
        assert!(staged.to_string().starts_with("solve:"));
    }

    #[test]
    fn at_stage_does_not_double_wrap() {
        let err = Error::Config("bad".into())
            .at_stage("solve")
            .at_stage("extract");
        assert_eq!(err.to_string(), "solve: config error: bad");
    }
}
