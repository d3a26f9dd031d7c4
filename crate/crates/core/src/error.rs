use std::path::PathBuf;

use crate::runoff::LulcClass;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid has no pixels")]
    EmptyGrid,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid coefficient table: {0}")]
    InvalidCoefficients(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("infeasible scenario{}: {reason}", class.map(|c| format!(" (class {})", c.name())).unwrap_or_default())]
    InfeasibleScenario {
        class: Option<LulcClass>,
        reason: String,
    },

    #[error("episode finished; call reset before stepping again")]
    EpisodeFinished,

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("non-finite value at update {update}: {detail}")]
    NonFiniteLoss { update: u64, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint integrity check failed on field `{field}`: {detail}")]
    Checkpoint { field: &'static str, detail: String },

    #[error("parse error in {path}: line {line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
