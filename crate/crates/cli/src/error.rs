use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::ConfigErrors;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration errors:\n{0}")]
    Config(#[from] ConfigErrors),
    #[error("{context}: {source}")]
    Model {
        context: String,
        #[source]
        source: nvltm_core::Error,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Csv { path: PathBuf, msg: String },
    #[error("invalid table: {0}")]
    Table(String),
    #[error("output path `{0}` escapes the output directory")]
    Escape(String),
    #[error("{0}")]
    Report(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Attaches scenario context to core errors.
pub(crate) trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T> Context<T> for nvltm_core::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|source| CliError::Model {
            context: what(),
            source,
        })
    }
}
