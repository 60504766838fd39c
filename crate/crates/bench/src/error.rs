use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),

    #[error("cannot parse {path}: {message}")]
    Spec { path: PathBuf, message: String },

    #[error("dataset file {path} not found; download `{file}` from {url} and place it there or point L2S_DATA_DIR at its directory")]
    MissingDataset { path: PathBuf, file: String, url: &'static str },

    #[error("run failed: {0}")]
    Run(String),

    #[error("{0} run(s) diverged")]
    Diverged(usize),

    #[error(transparent)]
    Core(#[from] l2s::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl BenchError {
    /// Process exit code: 2 for bad input, 3 for divergence under `--strict`, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            BenchError::Config(_) | BenchError::Spec { .. } | BenchError::MissingDataset { .. } => 2,
            BenchError::Core(l2s::Error::Config(_) | l2s::Error::Parse { .. }) => 2,
            BenchError::Diverged(_) => 3,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| BenchError::Io { path, source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>) -> impl FnOnce(csv::Error) -> Self {
        let path = path.into();
        move |source| BenchError::Csv { path, source }
    }
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

pub(crate) fn config<T>(message: impl Into<String>) -> Result<T> {
    Err(BenchError::Config(message.into()))
}
