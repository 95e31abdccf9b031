use thiserror::Error;

use crate::driver::Trace;

pub type Result<T> = std::result::Result<T, ForumError>;

#[derive(Debug, Error)]
pub enum ForumError {
    /// An oracle returned a vector whose length disagrees with the declared dimensions.
    #[error("oracle `{oracle}` returned length {got}, expected {expected}")]
    Dimension {
        oracle: &'static str,
        expected: usize,
        got: usize,
    },

    /// The problem does not provide an optional oracle that the operation needs.
    #[error("problem `{problem}` lacks capability: {capability}")]
    Capability { problem: String, capability: &'static str },

    /// A lower-level iterate became non-finite.
    #[error("lower-level solve diverged at step {step}")]
    LowerLevelDivergence { step: usize },

    /// The outer loop produced a non-finite point. The trace holds every record
    /// up to and including the last valid iteration.
    #[error("run diverged at iteration {iteration}")]
    Divergence { iteration: usize, partial: Box<Trace> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl ForumError {
    pub(crate) fn capability(problem: &str, capability: &'static str) -> Self {
        ForumError::Capability {
            problem: problem.to_string(),
            capability,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        ForumError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
