use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("truncated {what}: expected {expected} bytes, found {found}")]
    Truncated {
        what: &'static str,
        expected: u64,
        found: u64,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    Magic { expected: String, found: String },

    #[error("unsupported version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("width mismatch for {modality}: expected {expected} columns, found {found}")]
    WidthMismatch {
        modality: String,
        expected: usize,
        found: usize,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("config mismatch: expected {expected}, checkpoint has {found}")]
    ConfigMismatch { expected: String, found: String },

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("checksum mismatch in {0}")]
    Checksum(String),

    #[error("numeric fault: {0}")]
    NumericFault(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by non-finite values during a forward/backward pass.
    pub fn is_numeric_fault(&self) -> bool {
        matches!(self, Error::NumericFault(_))
    }

    /// True for errors that originate in the filesystem rather than in file contents.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
