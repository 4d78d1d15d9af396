use std::path::{Path, PathBuf};

use icfinv_core::Error as CoreError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// 2 usage or validation, 3 I/O or format, 4 numerical abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } | CliError::Format(_) => EXIT_IO,
            CliError::Core(e) => match e {
                CoreError::Dimension(_) | CoreError::Parameter(_) | CoreError::Config(_) => {
                    EXIT_USAGE
                }
                CoreError::Format(_) | CoreError::Io { .. } => EXIT_IO,
                CoreError::Numerical(_) | CoreError::NonFiniteLoss { .. } => EXIT_NUMERICAL,
            },
        }
    }
}
