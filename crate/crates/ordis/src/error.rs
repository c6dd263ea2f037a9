use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] ordis_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// File exists but cannot be parsed or is incomplete.
    #[error("{path}: corrupt file: {detail}")]
    Corrupt { path: PathBuf, detail: String },
    #[error("{path}: unsupported format version `{found}` (expected `{expected}`)")]
    Version { path: PathBuf, found: String, expected: &'static str },
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error("gradient check failed: max relative error {0:e}")]
    GradCheck(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, detail: impl Into<String>) -> Error {
        Error::Corrupt { path: path.into(), detail: detail.into() }
    }

    /// Process exit status: 1 usage, 2 data or integrity, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        use ordis_core::Error as C;
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::Core(C::InvalidConfig(_) | C::UnknownGroup(_)) => 1,
            Error::Core(C::NumericFailure { .. } | C::NonFinite { .. }) | Error::GradCheck(_) => 3,
            _ => 2,
        }
    }
}
