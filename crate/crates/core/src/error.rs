use std::path::PathBuf;

use thiserror::Error;

use crate::data::DataError;
use crate::graph::GraphError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{transform}: {msg}")]
    Dimension { transform: String, msg: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config: {0}")]
    Config(String),
    #[error("non-finite loss at step {step} (lr {lr:.3e}, grad norm {grad_norm:.3e}): {msg}")]
    Numeric {
        step: u64,
        lr: f64,
        grad_norm: f64,
        msg: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn dimension(transform: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Dimension {
            transform: transform.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
