use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate variance: W + B*lambda = {0} (apply the zero-variance rule first)")]
    DegenerateVariance(f64),

    #[error("insufficient data: {valid} valid observations, at least 2 required")]
    InsufficientData { valid: usize },

    #[error("series too long for exact enumeration: n = {n}, maximum {max}")]
    TooLarge { n: usize, max: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("geometry mismatch: {0}")]
    Geometry(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("scene spec error: {0}")]
    SceneSpec(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("degenerate histogram: {0}")]
    DegenerateHistogram(String),

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("tiff error on {path}: {source}")]
    Tiff {
        path: PathBuf,
        #[source]
        source: tiff::TiffError,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn tiff(path: impl Into<PathBuf>, source: tiff::TiffError) -> Self {
        Error::Tiff {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Coarse classification used by front ends to pick an exit status.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Parameter(_) | Error::SceneSpec(_) => ErrorCategory::Usage,
            Error::Contract(_) | Error::Convergence(_) => ErrorCategory::Internal,
            _ => ErrorCategory::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Internal,
}
