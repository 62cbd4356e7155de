use std::path::PathBuf;

/// Failures of a CLI run, mapped onto the exit-code contract.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    /// The run completed but a configured acceptance threshold was missed.
    #[error("threshold not met: {0}")]
    Threshold(String),

    #[error(transparent)]
    Lib(#[from] tslab::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 0 success, 1 threshold failure, 2 usage, format or file error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Threshold(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
