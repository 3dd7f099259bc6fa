use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("filter design error: {0}")]
    Design(String),

    #[error("processing error: {0}")]
    Processing(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("unsupported rate conversion {fs_in} Hz -> {fs_out} Hz: {reason}")]
    UnsupportedRate {
        fs_in: f64,
        fs_out: f64,
        reason: &'static str,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("model load error at byte {offset}: {message}")]
    Load { offset: usize, message: String },

    #[error("undefined result: {0}")]
    Undefined(String),

    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
