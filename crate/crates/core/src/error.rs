//! Error types shared across the engine.

use crate::planner::PlanParseError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller violated an operation precondition (empty input, bad range).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Bad or missing configuration (unknown level, missing annotations...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Transport-level backend failure. Retried internally; surfaces only
    /// once the retry budget is spent.
    #[error("backend transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    /// The remote endpoint answered but the payload was unusable.
    #[error("backend protocol error: {0}")]
    Protocol(String),

    /// A scripted backend ran out of matching entries — the test script
    /// does not cover the request sequence the code issued.
    #[error("script exhausted: no unconsumed entry matches {0}")]
    ScriptExhausted(String),

    /// Plan text failed validation.
    #[error("plan parse error: {0}")]
    PlanParse(#[from] PlanParseError),

    /// The JSON-validity retry ladder ran out of attempts.
    #[error("retry ladder exhausted after {attempts} attempt(s); last error: {last}")]
    LadderExhausted { attempts: u32, last: PlanParseError },

    /// Reward training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    /// Two corpus records share an id.
    #[error("duplicate document id: {0}")]
    DuplicateId(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: String, message: String },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn format(path: impl AsRef<std::path::Path>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            message: message.into(),
        }
    }

    /// True for failures worth retrying at the transport layer.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Transport { .. })
    }
}
