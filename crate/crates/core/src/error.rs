use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the model or estimator.
    #[error("domain error: {0}")]
    Domain(String),

    /// The conditioning value carries no probability mass at this truncation.
    #[error("impossible conditioning: no heralding mass at m2 = {m2}")]
    ZeroHeralding { m2: u32 },

    #[error("insufficient samples for m2 = {m2}: found {found}, need at least {required}")]
    InsufficientSamples {
        m2: u32,
        found: usize,
        required: usize,
    },

    /// An estimator whose defining ratio does not exist for this data.
    #[error("estimator undefined: {0}")]
    Undefined(String),

    #[error("{source_name}:{line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(source_name: &str, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            msg: msg.into(),
        }
    }

    /// An I/O failure on a named file.
    pub fn file(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::File {
            path: path.display().to_string(),
            source,
        }
    }

    /// True for errors caused by reading or parsing input rather than by
    /// the numbers themselves.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::File { .. } | Error::Parse { .. }
        )
    }
}
