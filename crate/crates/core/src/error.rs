use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file that does not conform to its declared format.
    #[error("{file}:{line}: {message}")]
    Format { file: String, line: usize, message: String },

    #[error("invalid data: {0}")]
    Invalid(String),

    #[error("ontology cycle detected at type {0}")]
    OntologyCycle(String),

    #[error("procedure {procedure}: no parse for step {step}")]
    MissingParse { procedure: String, step: usize },

    #[error("prediction/gold mismatch: {0}")]
    Mismatch(String),

    #[error("shape mismatch in {matrix}: {detail}")]
    Shape { matrix: &'static str, detail: String },

    #[error("node {0} has no neighbors; attention coefficients are undefined")]
    EmptyNeighborhood(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}

pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
