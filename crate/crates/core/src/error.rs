use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are split by how the CLI maps them to exit codes: input/parse
/// problems (`Parse`, `Io`) exit with 2, domain and numerical failures with 1.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on arguments or data was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numerical routine could not complete (singular system, divergence).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A persisted artifact has the wrong kind or format_version.
    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    /// Malformed file contents (CSV/JSON).
    #[error("parse error: {0}")]
    Parse(String),

    /// Filesystem failure.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Exit code the CLI should use for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Parse(_) | Error::Io { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
