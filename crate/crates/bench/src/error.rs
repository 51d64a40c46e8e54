use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Core(#[from] inrbench::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed result file {path}: {message}")]
    Result { path: String, message: String },
}

impl BenchError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        BenchError::Io { context: context.into(), source }
    }

    /// Process exit code for this error: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config { .. } => 1,
            _ => 2,
        }
    }
}
