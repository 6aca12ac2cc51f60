use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("{0}")]
    Schema(String),

    /// `row` counts data rows from 1, header excluded.
    #[error("row {row}: {message}")]
    Value { row: usize, message: String },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] cfdist::Error),
}

impl CliError {
    pub fn qualified_name(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io::IoError",
            CliError::Schema(_) => "ingest::SchemaError",
            CliError::Value { .. } => "ingest::ValueError",
            CliError::Usage(_) => "cli::UsageError",
            CliError::Core(e) => e.qualified_name(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
