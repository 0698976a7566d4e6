use std::path::PathBuf;

use thiserror::Error;

use crate::labels::UnifiedLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid token span {text:?}: {reason}")]
    Span { text: String, reason: String },

    #[error("invalid dataset id {0:?}: expected `lang.framework.corpus` with framework in rst|pdtb|sdrt|dep")]
    DatasetId(String),

    #[error("unknown unified label {0:?}")]
    UnknownLabel(String),

    #[error("no mapping for label {label:?} in dataset {dataset}")]
    UnmappedLabel { dataset: String, label: String },

    #[error("{0}")]
    Corpus(String),

    #[error("{0}")]
    Shape(String),

    #[error("{0}")]
    Format(String),

    #[error("{0}")]
    Model(String),

    #[error("label {0} has zero training instances")]
    EmptyClass(UnifiedLabel),

    #[error("{0}")]
    Training(String),

    #[error("{0}")]
    Experiment(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
