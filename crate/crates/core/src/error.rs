use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input file does not match the expected column layout.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    /// A numeric precondition was violated (value out of domain, undefined result).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{module}: {detail}: {source}")]
    Context {
        module: &'static str,
        detail: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, module: &'static str, detail: impl Into<String>) -> Self {
        Error::Context {
            module,
            detail: detail.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code: 1 validation/schema, 2 I/O, 3 domain/numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_)
            | Error::Parse { .. }
            | Error::Validation(_)
            | Error::Capacity(_)
            | Error::Config(_) => 1,
            Error::Io { .. } => 2,
            Error::Domain(_) => 3,
            Error::Context { source, .. } => source.exit_code(),
        }
    }

    /// The innermost error with any context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

/// Extension for attaching module context to results.
pub trait ResultExt<T> {
    fn module(self, module: &'static str, detail: impl Into<String>) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn module(self, module: &'static str, detail: impl Into<String>) -> Result<T> {
        self.map_err(|e| e.context(module, detail))
    }
}
