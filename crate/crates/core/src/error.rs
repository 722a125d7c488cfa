use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("plan error: {0}")]
    Plan(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file. `line` is 1-based; 0 when unknown.
    #[error("format error at line {line} ({context}): {message}")]
    Format {
        line: usize,
        context: String,
        message: String,
    },

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("environment error: {0}")]
    Environment(String),

    #[error("submission failed: {0}")]
    Submit(String),
}

impl Error {
    /// Process exit status for this error: 2 bad input, 3 environment,
    /// 4 incomplete data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Plan(_) | Error::Format { .. } | Error::Config { .. } => 2,
            Error::Io { .. } | Error::Environment(_) | Error::Submit(_) => 3,
            Error::Data(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(line: usize, context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
