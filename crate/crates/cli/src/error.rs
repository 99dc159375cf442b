use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("suite `{suite}` failed: {source}")]
    Suite {
        suite: &'static str,
        #[source]
        source: thinobs::Error,
    },
}

impl CliError {
    /// Process exit code: 2 for usage and configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Attaches the suite name to a library error.
pub trait SuiteContext<T> {
    fn suite(self, suite: &'static str) -> Result<T>;
}

impl<T> SuiteContext<T> for thinobs::Result<T> {
    fn suite(self, suite: &'static str) -> Result<T> {
        self.map_err(|source| CliError::Suite { suite, source })
    }
}
