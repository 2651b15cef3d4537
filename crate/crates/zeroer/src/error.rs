//! Error type shared across the pipeline stages.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("duplicate id {id:?} in table {table:?} (rows {first} and {second})")]
    DuplicateId {
        table: String,
        id: String,
        first: usize,
        second: usize,
    },

    #[error("ragged row at line {line} in {path}: expected {expected} fields, got {got}")]
    RaggedRow {
        path: PathBuf,
        line: u64,
        expected: usize,
        got: usize,
    },

    #[error("unknown attribute {attribute:?} in table {table:?}")]
    UnknownAttribute { table: String, attribute: String },

    #[error("no attributes could be aligned between {left:?} and {right:?}")]
    EmptySchema { left: String, right: String },

    #[error("blocking attribute {attribute:?} has no non-null values")]
    AllNullAttribute { attribute: String },

    #[error("unresolvable id {id:?} (scope {scope})")]
    UnresolvedId { id: String, scope: String },

    #[error("degenerate initialization: {0}")]
    DegenerateInit(String),

    #[error("degenerate class {class} in M-step: effective count {count:.3e} below 1e-6")]
    DegenerateClass { class: char, count: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// Process exit code for the CLI; one code per error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_)
            | Error::DuplicateId { .. }
            | Error::RaggedRow { .. }
            | Error::UnknownAttribute { .. }
            | Error::EmptySchema { .. }
            | Error::UnresolvedId { .. } => 2,
            Error::DegenerateInit(_) | Error::DegenerateClass { .. } => 3,
            Error::Numerical(_) => 4,
            Error::AllNullAttribute { .. } | Error::Config(_) => 5,
            Error::Io { .. } => 6,
        }
    }
}
