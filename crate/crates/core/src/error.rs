use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image format error: {0}")]
    Format(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("near-singular divisor (|d| = {modulus:e}) in spectral solve")]
    Singular { modulus: f64 },
    #[error("dense oracle refused: {len} bins exceeds the limit of {limit}")]
    SizeGuard { len: usize, limit: usize },
    #[error("intervals {0:?} and {1:?} are not adjacent")]
    NotAdjacent((usize, usize), (usize, usize)),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("count mismatch: {0}")]
    CountMismatch(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
