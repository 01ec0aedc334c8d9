use std::path::PathBuf;

use thiserror::Error;

use crate::train::FoldReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("empty input to {0}")]
    EmptyInput(&'static str),

    #[error("empty graph: {0}")]
    EmptyGraph(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{op} did not converge within {limit} iterations")]
    IterationLimit { op: &'static str, limit: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("failed to load {}: {source}", path.display())]
    Load {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Data {
        file: String,
        line: usize,
        message: String,
    },

    #[error("graph {graph}: {message}")]
    GraphData { graph: usize, message: String },

    #[error("fold {fold} aborted: {source}")]
    FoldAborted {
        fold: usize,
        #[source]
        source: Box<Error>,
        partial: Box<FoldReport>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Whether the failure originates in input data rather than numerics or configuration.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Load { .. } | Error::Data { .. } | Error::GraphData { .. } | Error::EmptyGraph(_) => true,
            Error::FoldAborted { source, .. } => source.is_data_error(),
            _ => false,
        }
    }

    pub fn is_numeric_error(&self) -> bool {
        match self {
            Error::Numeric(_) | Error::IterationLimit { .. } => true,
            Error::FoldAborted { source, .. } => source.is_numeric_error(),
            _ => false,
        }
    }
}
