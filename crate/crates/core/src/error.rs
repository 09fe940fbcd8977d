use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    #[error("truncated file: header implies {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("trailing data: header implies {expected} bytes, found {actual}")]
    TrailingBytes { expected: u64, actual: u64 },

    #[error("invalid mask byte 0x{value:02x} at payload offset {offset}")]
    InvalidMask { offset: usize, value: u8 },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("solver diverged: non-finite iterate at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("denoiser failed on slice {slice}: {source}")]
    Denoiser {
        /// 1-based slice index.
        slice: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn dims(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    /// Process exit code for the CLI: 2 config, 3 divergence, 4 I/O or file format.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::Dimension(_) => 2,
            Error::Divergence { .. } => 3,
            Error::Denoiser { source, .. } => source.exit_code(),
            Error::NonFinite { .. } => 3,
            Error::Io { .. }
            | Error::BadMagic { .. }
            | Error::UnsupportedVersion(_)
            | Error::Truncated { .. }
            | Error::TrailingBytes { .. }
            | Error::InvalidMask { .. } => 4,
        }
    }
}
