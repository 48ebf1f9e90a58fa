use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("corpus has {available} tokens but {requested} were requested")]
    Size { requested: usize, available: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("word {0:?} is not in the model")]
    NotTrained(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported file header {0:?}")]
    Version(String),

    #[error("file is truncated: {0}")]
    Truncated(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
