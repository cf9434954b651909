use std::io;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] mgnc_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {location}: {message}", path.display())]
    Format {
        path: PathBuf,
        location: String,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Check(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            location: location.into(),
            message: message.into(),
        }
    }

    /// Process exit status: 1 for bad input or configuration, 2 for
    /// failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(mgnc_core::Error::Numeric(_)) | Error::Io { .. } | Error::Check(_) => 2,
            Error::Core(mgnc_core::Error::Usage(_)) | Error::Format { .. } | Error::Config(_) => 1,
        }
    }
}
