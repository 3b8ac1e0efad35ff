use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("numeric failure in case {case}: {source}")]
    Numeric {
        case: String,
        #[source]
        source: ringvib::Error,
    },
    #[error("fixture mismatch: {failed} of {total} rows outside tolerance")]
    FixtureMismatch { failed: usize, total: usize },
    #[error("corrupt fixture {path}: {source}")]
    CorruptFixture {
        path: String,
        #[source]
        source: ringvib::Error,
    },
    #[error("fixture file not found: {0}")]
    MissingFixture(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config { field: field.into(), message: message.into() }
    }

    pub fn numeric(case: impl Into<String>, source: ringvib::Error) -> Self {
        Self::Numeric { case: case.into(), source }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            Self::Numeric { .. } => 3,
            Self::FixtureMismatch { .. } | Self::CorruptFixture { .. } => 4,
            Self::MissingFixture(_) => 5,
            Self::Io { .. } | Self::Csv(_) | Self::Json(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
