use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SieveError> = std::result::Result<T, E>;

/// Coarse error classes. Each maps to a stable process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Io,
    Backend,
    Data,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 1,
            ErrorClass::Io => 2,
            ErrorClass::Backend => 3,
            ErrorClass::Data => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum SieveError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("duplicate uid {uid:?} (line {line})")]
    DuplicateUid { uid: String, line: u64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("non-finite value for uid {uid:?}")]
    NonFinite { uid: String },

    #[error("shape mismatch: expected dimension {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("input not sorted by uid: {next:?} follows {prev:?}")]
    Order { prev: String, next: String },

    #[error("conflicting values for uid {uid:?} in column {column}")]
    Conflict { uid: String, column: &'static str },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("arity error: {0}")]
    Arity(String),

    #[error("missing {column} score for uid {uid:?}")]
    MissingScore { uid: String, column: &'static str },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("resource error: {0}")]
    Resource(String),

    #[error("config error in {key:?}: {message}")]
    Config { key: String, message: String },

    #[error("unknown config key {0:?}")]
    UnknownKey(String),

    #[error("backend transport error: {0}")]
    Transport(String),

    #[error("backend could not resolve {0:?}")]
    NotFound(String),

    #[error("backend protocol error: {0}")]
    Protocol(String),

    #[error("stage {stage} failed{}: {source}", uid.as_ref().map(|u| format!(" at uid {u:?}")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        uid: Option<String>,
        #[source]
        source: Box<SieveError>,
    },
}

impl SieveError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SieveError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        SieveError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Wraps an error with the pipeline stage it came from.
    pub fn at_stage(self, stage: &'static str, uid: Option<&str>) -> Self {
        SieveError::Stage {
            stage,
            uid: uid.map(str::to_owned),
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            SieveError::Io { .. } | SieveError::Resource(_) => ErrorClass::Io,
            SieveError::Config { .. } | SieveError::UnknownKey(_) => ErrorClass::Config,
            SieveError::Transport(_) | SieveError::NotFound(_) | SieveError::Protocol(_) => {
                ErrorClass::Backend
            }
            SieveError::Stage { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }
}
