use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced by the library.
///
/// Variants fall in two families: malformed or inconsistent *data* (files,
/// rasters, point clouds) and *pipeline* conditions that a caller may want to
/// report differently. [`Error::is_data_error`] tells them apart.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic in {what}: expected {expected:?}, found {found:?}")]
    BadMagic {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("truncated {what}: expected {expected} bytes, found {actual}")]
    Truncated {
        what: &'static str,
        expected: u64,
        actual: u64,
    },

    #[error("{what}, line {line}: {message}")]
    Parse { what: String, line: usize, message: String },

    #[error("image error: {0}")]
    Image(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("class id {0} is not registered")]
    UnregisteredClass(u8),

    #[error("empty map")]
    EmptyMap,

    #[error("no road points in map")]
    NoRoad,

    #[error("no visible support: all {excluded} loss points are behind a camera")]
    NoVisibleSupport { excluded: usize },

    #[error("no labelled pixels in ground truth")]
    NoLabelledPixels,

    #[error("length mismatch: {0} estimates vs {1} ground-truth poses")]
    LengthMismatch(usize, usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by bad input data rather than a pipeline condition.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::NoVisibleSupport { .. } | Error::EmptyMap | Error::NoRoad)
    }
}
