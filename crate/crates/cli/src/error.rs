use qpspec_core::QpError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },

    #[error("{context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: QpError,
    },

    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Config(_) | CliError::Output { .. } => 2,
            CliError::Numerical { .. } => 3,
        }
    }

    pub fn output(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Output {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

/// Attaches a module context to core errors.
pub trait Context<T> {
    fn context(self, what: &str) -> Result<T, CliError>;
}

impl<T> Context<T> for qpspec_core::Result<T> {
    fn context(self, what: &str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Numerical {
            context: what.to_string(),
            source,
        })
    }
}
