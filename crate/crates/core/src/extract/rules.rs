use std::collections::BTreeMap;
use std::fmt;

use regex::Regex;

use crate::codecs::{ParseError, SourceSpan};
use crate::error::{NidmError, Result};
use crate::model::{is_valid_prefix, Attribute, AttributeValue, Document, QualifiedName, Timestamp, PROV_PREFIX};

use super::Builder;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EmitKind {
    ActivityStart,
    ActivityEnd,
    Parameter,
    InputFile,
    OutputFile,
}

impl EmitKind {
    pub fn name(self) -> &'static str {
        match self {
            EmitKind::ActivityStart => "activity-start",
            EmitKind::ActivityEnd => "activity-end",
            EmitKind::Parameter => "parameter",
            EmitKind::InputFile => "input-file",
            EmitKind::OutputFile => "output-file",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "activity-start" => EmitKind::ActivityStart,
            "activity-end" => EmitKind::ActivityEnd,
            "parameter" => EmitKind::Parameter,
            "input-file" => EmitKind::InputFile,
            "output-file" => EmitKind::OutputFile,
            _ => return None,
        })
    }

    /// Named captures the pattern must define. `time` is optional for the
    /// activity kinds.
    pub fn required_captures(self) -> &'static [&'static str] {
        match self {
            EmitKind::ActivityStart => &["label"],
            EmitKind::ActivityEnd => &[],
            EmitKind::Parameter => &["name", "value"],
            EmitKind::InputFile | EmitKind::OutputFile => &["path"],
        }
    }
}

impl fmt::Display for EmitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug)]
pub struct ExtractionRule {
    pub emit: EmitKind,
    pub type_tag: QualifiedName,
    pub pattern: Regex,
}

impl ExtractionRule {
    /// `index` is the 1-based position used in error messages.
    pub fn new(index: usize, emit: EmitKind, type_tag: QualifiedName, pattern: &str) -> Result<Self> {
        let pattern = Regex::new(pattern).map_err(|e| NidmError::RuleError {
            index,
            message: format!("pattern does not compile: {e}"),
        })?;
        let names: Vec<&str> = pattern.capture_names().flatten().collect();
        for needed in emit.required_captures() {
            if !names.contains(needed) {
                return Err(NidmError::RuleError {
                    index,
                    message: format!("{emit} rule needs a `{needed}` capture"),
                });
            }
        }
        Ok(ExtractionRule {
            emit,
            type_tag,
            pattern,
        })
    }
}

#[derive(Clone, Debug)]
pub struct RuleSet {
    pub name: String,
    pub rules: Vec<ExtractionRule>,
    pub namespaces: BTreeMap<String, String>,
}

impl RuleSet {
    pub fn new(name: impl Into<String>, rules: Vec<ExtractionRule>, namespaces: BTreeMap<String, String>) -> Result<Self> {
        for (i, rule) in rules.iter().enumerate() {
            let p = rule.type_tag.prefix();
            if p != PROV_PREFIX && !namespaces.contains_key(p) {
                return Err(NidmError::RuleError {
                    index: i + 1,
                    message: format!("type prefix `{p}` is not declared"),
                });
            }
        }
        if !rules.iter().any(|r| r.emit == EmitKind::ActivityStart) {
            return Err(NidmError::RuleError {
                index: rules.len(),
                message: "rule set has no activity-start rule".into(),
            });
        }
        Ok(RuleSet {
            name: name.into(),
            rules,
            namespaces,
        })
    }

    /// Reads a rule file:
    ///
    /// ```text
    /// name freesurfer
    /// ns fs http://surfer.nmr.mgh.harvard.edu/fs#
    /// rule activity-start fs:ReconStage /^#@# (?P<label>.+)$/
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut name = String::new();
        let mut namespaces = BTreeMap::new();
        let mut rules = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |expected: &str| -> NidmError {
                ParseError::new(SourceSpan::new(line_no, 1, raw.len()), expected, format!("`{line}`")).into()
            };
            let mut parts = line.splitn(2, char::is_whitespace);
            let keyword = parts.next().unwrap_or("");
            let rest = parts.next().unwrap_or("").trim();
            match keyword {
                "name" => name = rest.to_string(),
                "ns" => {
                    let fields: Vec<&str> = rest.split_whitespace().collect();
                    match fields.as_slice() {
                        [prefix, uri] if is_valid_prefix(prefix) => {
                            namespaces.insert(prefix.to_string(), uri.to_string());
                        }
                        _ => return Err(err("ns <prefix> <uri>")),
                    }
                }
                "rule" => {
                    let mut fields = rest.splitn(3, char::is_whitespace);
                    let (Some(kind), Some(tag), Some(pattern)) = (fields.next(), fields.next(), fields.next()) else {
                        return Err(err("rule <emit-kind> <type-qname> /<regex>/"));
                    };
                    let index = rules.len() + 1;
                    let emit = EmitKind::from_name(kind).ok_or_else(|| NidmError::RuleError {
                        index,
                        message: format!("unknown emit kind `{kind}`"),
                    })?;
                    let type_tag: QualifiedName = tag.parse().map_err(|_| NidmError::RuleError {
                        index,
                        message: format!("`{tag}` is not a qualified name"),
                    })?;
                    let pattern = pattern.trim();
                    let body = pattern
                        .strip_prefix('/')
                        .and_then(|p| p.strip_suffix('/'))
                        .filter(|p| !p.is_empty())
                        .ok_or_else(|| err("a pattern between slashes"))?;
                    rules.push(ExtractionRule::new(index, emit, type_tag, body)?);
                }
                _ => return Err(err("name, ns or rule")),
            }
        }
        RuleSet::new(name, rules, namespaces)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtractionOutcome {
    pub document: Document,
    pub unmatched_lines: usize,
}

/// Applies the first matching rule to each line. Records are numbered in
/// emission order (a_1, e_1, u_1, g_1, ...).
pub fn extract_with_rules(log: &str, rules: &RuleSet) -> Result<ExtractionOutcome> {
    let mut b = Builder::new();
    b.namespaces = rules.namespaces.clone();
    let mut unmatched = 0;
    for (i, line) in log.lines().enumerate() {
        let Some((rule, caps)) = rules.rules.iter().find_map(|r| r.pattern.captures(line).map(|c| (r, c))) else {
            unmatched += 1;
            continue;
        };
        let get = |name: &str| caps.name(name).map(|m| m.as_str().trim()).unwrap_or("");
        let time = match caps.name("time") {
            Some(m) => Some(Timestamp::parse(m.as_str().trim()).ok_or_else(|| {
                NidmError::from(ParseError::new(
                    SourceSpan::new(i + 1, m.start() + 1, m.len()),
                    "a timestamp",
                    format!("`{}`", m.as_str()),
                ))
            })?),
            None => None,
        };
        let tag = || vec![Attribute::prov_type(rule.type_tag.clone())];
        match rule.emit {
            EmitKind::ActivityStart => {
                b.close_activity(None);
                let mut attrs = tag();
                attrs.push(Attribute::new(QualifiedName::prov("label"), AttributeValue::Text(get("label").to_string())));
                b.open_activity(time, attrs);
            }
            EmitKind::ActivityEnd => {
                let end = time.filter(|t| b.open_start().is_none_or(|s| *t >= s));
                b.close_activity(end);
            }
            EmitKind::Parameter => b.parameter(get("name"), get("value"), tag()),
            EmitKind::InputFile => b.input(get("path"), tag()),
            EmitKind::OutputFile => b.output(get("path"), tag()),
        }
    }
    b.close_activity(None);
    let document = if b.records.is_empty() {
        Document::empty()
    } else {
        b.finish()
    };
    Ok(ExtractionOutcome {
        document,
        unmatched_lines: unmatched,
    })
}
