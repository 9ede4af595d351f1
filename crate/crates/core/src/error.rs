use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("size mismatch: expected {expected} bytes, found {actual}")]
    SizeMismatch { expected: u64, actual: u64 },

    #[error("invalid header: {0}")]
    Header(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bad magic: expected \"HSIN\", found {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    #[error("truncated or oversized payload: expected {expected} bytes, found {actual}")]
    PayloadLength { expected: usize, actual: usize },

    #[error("parameter {index} = {value} is outside the binary16 range")]
    HalfOverflow { index: usize, value: f32 },

    #[error("non-finite gradient at parameter {index}")]
    NonFiniteGradient { index: usize },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    NonFiniteLoss { epoch: usize, loss: f64 },

    #[error("no candidate architecture fits within {budget} bpppb")]
    EmptyFeasibleSet { budget: f64 },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures of the numerical pipeline itself (divergence,
    /// overflow) rather than bad inputs or files.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::HalfOverflow { .. } | Error::NonFiniteGradient { .. } | Error::NonFiniteLoss { .. }
        )
    }

    /// True for errors rooted in reading or parsing files.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::SizeMismatch { .. }
                | Error::Header(_)
                | Error::BadMagic(_)
                | Error::UnsupportedVersion(_)
                | Error::PayloadLength { .. }
        )
    }
}
