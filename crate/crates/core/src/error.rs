use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("mesh is disconnected: {components} connected components")]
    Disconnected { components: usize },

    #[error("{n} vertices exceeds the dense eigendecomposition cap of {cap}; lower the mesh resolution")]
    TooLarge { n: usize, cap: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("frame lower bound is zero: the kernels leave part of the spectrum uncovered")]
    DegenerateFrame,

    #[error("no activity at peak time")]
    NoActivity,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
