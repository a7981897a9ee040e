use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: u32, col: u32, msg: String },

    #[error("type error at line {line}: {msg}")]
    Type { line: u32, msg: String },

    #[error("label error: {0}")]
    Label(String),

    #[error("{path}:{line}: malformed status record: {msg}")]
    StatusFormat {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("status integrity violation: {0}")]
    Integrity(String),

    #[error("prover configuration: {0}")]
    Config(String),

    #[error("bad input: {0}")]
    Input(String),

    #[error("oracle refused: {0}")]
    OracleRefused(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Error {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
