use thiserror::Error;

use crate::codecs::ParseError;
use crate::model::QualifiedName;
use crate::validate::ValidationReport;

pub type Result<T, E = NidmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NidmError {
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),

    #[error("invalid qualified name `{0}`")]
    InvalidName(String),

    #[error("{0}")]
    Parse(#[from] ParseError),

    #[error("undeclared namespace prefix `{prefix}` at line {line}, column {column}")]
    UndeclaredPrefix {
        prefix: String,
        line: usize,
        column: usize,
    },

    #[error("unknown element `{element}` at {path}")]
    UnknownElement { element: String, path: String },

    #[error("document is invalid: {0}")]
    InvalidDocument(ValidationReport),

    #[error("unknown record id `{0}`")]
    UnknownId(String),

    #[error("`{0}` is not a collection")]
    NotACollection(String),

    #[error("term mapping cycle: {}", format_cycle(.0))]
    CycleDetected(Vec<QualifiedName>),

    #[error("mapping target `{0}` has no term definition")]
    UnknownCanonical(QualifiedName),

    #[error("bad query: {0}")]
    BadQuery(String),

    #[error("unbalanced step: BEGIN at line {0} has no END")]
    UnbalancedStep(usize),

    #[error("rule {index}: {message}")]
    RuleError { index: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_cycle(cycle: &[QualifiedName]) -> String {
    cycle
        .iter()
        .map(|q| q.to_string())
        .collect::<Vec<_>>()
        .join(" -> ")
}

impl NidmError {
    /// Short machine-readable code, used in API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            NidmError::DuplicateId(_) => "DuplicateId",
            NidmError::InvalidName(_) => "InvalidName",
            NidmError::Parse(_) => "ParseError",
            NidmError::UndeclaredPrefix { .. } => "UndeclaredPrefix",
            NidmError::UnknownElement { .. } => "UnknownElement",
            NidmError::InvalidDocument(_) => "InvalidDocument",
            NidmError::UnknownId(_) => "UnknownId",
            NidmError::NotACollection(_) => "NotACollection",
            NidmError::CycleDetected(_) => "CycleDetected",
            NidmError::UnknownCanonical(_) => "UnknownCanonical",
            NidmError::BadQuery(_) => "BadQuery",
            NidmError::UnbalancedStep(_) => "UnbalancedStep",
            NidmError::RuleError { .. } => "RuleError",
            NidmError::Io(_) => "Io",
        }
    }
}
