//! Text encodings of documents: PROV-N, provenance XML and JSON.

use std::fmt;

mod json;
mod provn;
mod xml;

pub use json::{document_from_json_value, document_to_json_value, parse_json, serialize_json};
pub use provn::{parse_provn, serialize_provn, write_provn};
pub use xml::{parse_xml, serialize_xml, write_xml, XmlMode};

use crate::error::Result;
use crate::model::Document;

/// Location of a diagnostic in the source text. Lines and columns are
/// 1-based and count characters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

impl SourceSpan {
    pub fn new(line: usize, column: usize, length: usize) -> Self {
        SourceSpan {
            line: line.max(1),
            column: column.max(1),
            length,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub span: SourceSpan,
    pub expected: String,
    pub found: String,
    /// Element path (XML) or JSON pointer, when the format has one.
    pub path: Option<String>,
}

impl ParseError {
    pub fn new(span: SourceSpan, expected: impl Into<String>, found: impl Into<String>) -> Self {
        ParseError {
            span,
            expected: expected.into(),
            found: found.into(),
            path: None,
        }
    }

    pub fn at_path(mut self, path: impl Into<String>) -> Self {
        self.path = Some(path.into());
        self
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}, column {}: expected {}, found {}",
            self.span.line, self.span.column, self.expected, self.found
        )?;
        if let Some(path) = &self.path {
            write!(f, " (at {path})")?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

/// The three interchange formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Format {
    Provn,
    Xml,
    Json,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Provn, Format::Xml, Format::Json];

    pub fn name(self) -> &'static str {
        match self {
            Format::Provn => "provn",
            Format::Xml => "xml",
            Format::Json => "json",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "provn" | "prov-n" => Some(Format::Provn),
            "xml" => Some(Format::Xml),
            "json" => Some(Format::Json),
            _ => None,
        }
    }

    pub fn media_type(self) -> &'static str {
        match self {
            Format::Provn => "text/provenance-notation",
            Format::Xml => "application/xml",
            Format::Json => "application/json",
        }
    }

    pub fn from_media_type(media: &str) -> Option<Self> {
        let essence = media.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
        match essence.as_str() {
            "text/provenance-notation" => Some(Format::Provn),
            "application/xml" | "text/xml" | "application/provenance+xml" => Some(Format::Xml),
            "application/json" | "application/provenance+json" => Some(Format::Json),
            _ => None,
        }
    }

    /// Guesses a format from a file name (`.provn`, `.prov.xml`, `.prov.json`).
    pub fn from_path(path: &std::path::Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?;
        Format::from_name(ext)
    }

    /// Guesses a format from the first non-blank character.
    pub fn sniff(text: &str) -> Format {
        match text.trim_start().chars().next() {
            Some('<') => Format::Xml,
            Some('{') => Format::Json,
            _ => Format::Provn,
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn parse(format: Format, text: &str) -> Result<Document> {
    match format {
        Format::Provn => parse_provn(text),
        Format::Xml => parse_xml(text),
        Format::Json => parse_json(text),
    }
}

/// Serializes in `format`; XML uses the canonical mode.
pub fn serialize(format: Format, doc: &Document) -> Result<String> {
    match format {
        Format::Provn => serialize_provn(doc),
        Format::Xml => serialize_xml(doc, XmlMode::Canonical),
        Format::Json => Ok(serialize_json(doc)),
    }
}

/// Serializers refuse documents whose relations point nowhere.
pub(crate) fn require_resolved(doc: &Document) -> Result<()> {
    use crate::validate::{validate, ValidationReport, ViolationCode};
    let report = validate(doc);
    let dangling: Vec<_> = report
        .violations
        .into_iter()
        .filter(|v| v.code == ViolationCode::DanglingRef)
        .collect();
    if dangling.is_empty() {
        Ok(())
    } else {
        Err(crate::error::NidmError::InvalidDocument(ValidationReport { violations: dangling }))
    }
}
