use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed metadata: {0}")]
    Metadata(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("table {table}, row {row}: expected {expected} fields, found {found}")]
    Arity {
        table: String,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("{table}.{column}, row {row}: cannot parse {value:?} as {dtype}")]
    Parse {
        table: String,
        column: String,
        row: usize,
        value: String,
        dtype: String,
    },

    #[error("unknown table `{0}`")]
    UnknownTable(String),

    #[error("unknown column `{table}.{column}`")]
    UnknownColumn { table: String, column: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("binary format error: {0}")]
    Format(String),

    #[error("unknown {kind} `{name}`")]
    UnknownNode { kind: &'static str, name: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn unknown_column(table: &str, column: &str) -> Self {
        Error::UnknownColumn {
            table: table.to_string(),
            column: column.to_string(),
        }
    }

    /// Whether the error originates from configuration rather than data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Metadata(_))
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
