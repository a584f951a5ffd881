use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward: {0}")]
    Backward(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (max |grad| = {max_abs_grad})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        max_abs_grad: f64,
    },

    #[error("dataset: {0}")]
    Data(String),

    #[error("missing sample files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingFiles(Vec<PathBuf>),

    #[error("{path}: missing columns [{}], unexpected columns [{}]", .missing.join(", "), .extra.join(", "))]
    Columns {
        path: PathBuf,
        missing: Vec<String>,
        extra: Vec<String>,
    },

    #[error("model file: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
