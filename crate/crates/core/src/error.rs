use std::path::PathBuf;

use thiserror::Error;

/// Why a feature container was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatErrorKind {
    BadMagic,
    UnsupportedVersion,
    ReservedNonZero,
    ZeroRank,
    ZeroDim,
    DimOverflow,
    Truncated,
    TrailingBytes,
    NonFinite,
}

impl FormatErrorKind {
    /// Stable short code, used in CLI messages.
    pub fn code(self) -> &'static str {
        match self {
            FormatErrorKind::BadMagic => "bad-magic",
            FormatErrorKind::UnsupportedVersion => "bad-version",
            FormatErrorKind::ReservedNonZero => "bad-reserved",
            FormatErrorKind::ZeroRank => "zero-rank",
            FormatErrorKind::ZeroDim => "zero-dim",
            FormatErrorKind::DimOverflow => "dim-overflow",
            FormatErrorKind::Truncated => "truncated",
            FormatErrorKind::TrailingBytes => "trailing-bytes",
            FormatErrorKind::NonFinite => "non-finite",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("format error ({}) at byte {offset}: {detail}", kind.code())]
    Format {
        kind: FormatErrorKind,
        offset: u64,
        detail: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
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
}
