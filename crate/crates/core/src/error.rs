use std::path::PathBuf;

use thiserror::Error;

/// A single violated configuration constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigViolation {
    pub key: String,
    pub constraint: String,
}

impl std::fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.constraint)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate record id {0:?}")]
    DuplicateId(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration:\n{}", format_violations(.0))]
    Config(Vec<ConfigViolation>),

    #[error("adapter error: {0}")]
    Adapter(String),

    #[error("stage {stage} failed on record {record}: {source}")]
    Stage {
        stage: String,
        record: String,
        #[source]
        source: Box<Error>,
    },

    #[error("sinkhorn iterations did not converge after {iterations} iterations (marginal violation {violation:.3e})")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("shadow models show zero variance on every probe; use a larger or more varied synthetic corpus")]
    DegenerateShadows,

    #[error("serialization error: {0}")]
    Serde(String),
}

fn format_violations(v: &[ConfigViolation]) -> String {
    v.iter()
        .map(|x| format!("  - {x}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Adapter,
    Data,
    Other,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Adapter(_) => ErrorClass::Adapter,
            Error::Stage { source, .. } => source.class(),
            Error::Io { .. } | Error::Parse { .. } | Error::DuplicateId(_) | Error::InvalidInput(_) => {
                ErrorClass::Data
            }
            Error::NotConverged { .. } | Error::DegenerateShadows | Error::Serde(_) => ErrorClass::Other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn in_stage(self, stage: &str, record: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            record: record.to_string(),
            source: Box::new(self),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
