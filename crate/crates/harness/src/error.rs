use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] dasgrad_core::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn io(path: &Path, source: impl Into<std::io::Error>) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source: source.into() }
    }

    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        HarnessError::Parse { line, message: message.into() }
    }
}
