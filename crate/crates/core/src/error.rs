use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("catalog parse error at line {line}: {message}")]
    CatalogParse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("extraction error: {0}")]
    Extraction(String),

    #[error("variance undefined: {n} points cannot support {k} clusters")]
    UndefinedVariance { n: usize, k: usize },

    #[error("generation failed: {0}")]
    Generation(String),

    /// A required tool is missing or unusable. Distinct from a compiler crash.
    #[error("environment error: {0}")]
    Environment(String),

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cancelled")]
    Cancelled,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, message: impl ToString) -> Self {
        Error::Format {
            what,
            message: message.to_string(),
        }
    }

    /// Process exit code: 1 usage/validation, 2 environment, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::CatalogParse { .. }
            | Error::Validation(_)
            | Error::Format { .. }
            | Error::Extraction(_)
            | Error::UndefinedVariance { .. } => 1,
            Error::Environment(_) => 2,
            Error::Generation(_) | Error::Io { .. } | Error::Cancelled => 3,
        }
    }
}
