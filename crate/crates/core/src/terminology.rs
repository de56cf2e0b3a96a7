//! Namespace registry, term definitions and source-term mappings used to
//! harmonize documents coming from different databases.
//!
//! Registry files are line oriented:
//!
//! ```text
//! # comment
//! ns neurolex http://neurolex.org/wiki/
//! term neurolex:T1 term "T1" "T1-weighted MRI acquisition" http://neurolex.org/wiki/T1
//! map hid:spgr neurolex:T1
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use crate::codecs::{ParseError, SourceSpan};
use crate::error::{NidmError, Result};
use crate::model::{is_valid_prefix, Attribute, AttributeValue, Document, QualifiedName, PROV_PREFIX};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Datatype {
    String,
    Integer,
    Decimal,
    Datetime,
    Uri,
    Term,
}

impl Datatype {
    pub fn name(self) -> &'static str {
        match self {
            Datatype::String => "string",
            Datatype::Integer => "integer",
            Datatype::Decimal => "decimal",
            Datatype::Datetime => "datetime",
            Datatype::Uri => "uri",
            Datatype::Term => "term",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "string" => Datatype::String,
            "integer" => Datatype::Integer,
            "decimal" => Datatype::Decimal,
            "datetime" => Datatype::Datetime,
            "uri" => Datatype::Uri,
            "term" => Datatype::Term,
            _ => return None,
        })
    }
}

impl fmt::Display for Datatype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TermDefinition {
    pub term: QualifiedName,
    pub label: String,
    pub definition: String,
    pub datatype: Datatype,
    pub source_url: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermMapping {
    pub source: QualifiedName,
    pub canonical: QualifiedName,
}

/// Immutable once loaded; share it behind an `Arc`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Registry {
    namespaces: BTreeMap<String, String>,
    definitions: BTreeMap<QualifiedName, TermDefinition>,
    mappings: BTreeMap<QualifiedName, QualifiedName>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry::default()
    }

    /// Builds a registry and checks its invariants.
    pub fn new(
        namespaces: BTreeMap<String, String>,
        definitions: Vec<TermDefinition>,
        mappings: Vec<TermMapping>,
    ) -> Result<Self> {
        let mut reg = Registry {
            namespaces,
            ..Registry::default()
        };
        for d in definitions {
            reg.check_prefix(&d.term, 0)?;
            if reg.definitions.contains_key(&d.term) {
                return Err(ParseError::new(SourceSpan::new(1, 1, 0), "a unique term", format!("duplicate `{}`", d.term)).into());
            }
            reg.definitions.insert(d.term.clone(), d);
        }
        for m in mappings {
            reg.add_mapping(m, 0)?;
        }
        reg.check()?;
        Ok(reg)
    }

    fn check_prefix(&self, q: &QualifiedName, line: usize) -> Result<()> {
        if q.prefix() == PROV_PREFIX || self.namespaces.contains_key(q.prefix()) {
            Ok(())
        } else {
            Err(NidmError::UndeclaredPrefix {
                prefix: q.prefix().to_string(),
                line: line.max(1),
                column: 1,
            })
        }
    }

    fn add_mapping(&mut self, m: TermMapping, line: usize) -> Result<()> {
        self.check_prefix(&m.source, line)?;
        self.check_prefix(&m.canonical, line)?;
        match self.mappings.get(&m.source) {
            Some(existing) if *existing != m.canonical => Err(ParseError::new(
                SourceSpan::new(line, 1, 0),
                format!("at most one mapping for `{}`", m.source),
                format!("`{}` and `{}`", existing, m.canonical),
            )
            .into()),
            _ => {
                self.mappings.insert(m.source, m.canonical);
                Ok(())
            }
        }
    }

    /// Acyclicity and defined targets.
    fn check(&self) -> Result<()> {
        for canonical in self.mappings.values() {
            if !self.definitions.contains_key(canonical) {
                return Err(NidmError::UnknownCanonical(canonical.clone()));
            }
        }
        for start in self.mappings.keys() {
            let mut path = vec![start.clone()];
            let mut current = start;
            while let Some(next) = self.mappings.get(current) {
                if let Some(pos) = path.iter().position(|q| q == next) {
                    let mut cycle = path[pos..].to_vec();
                    cycle.push(next.clone());
                    return Err(NidmError::CycleDetected(cycle));
                }
                path.push(next.clone());
                current = next;
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut reg = Registry::default();
        let mut pending_maps = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields = split_fields(line).map_err(|(col, expected)| {
                NidmError::from(ParseError::new(SourceSpan::new(line_no, col, 0), expected, "end of line"))
            })?;
            let err = |expected: &str, found: &str| -> NidmError {
                ParseError::new(SourceSpan::new(line_no, 1, raw.len()), expected, format!("`{found}`")).into()
            };
            let qname = |s: &str| s.parse::<QualifiedName>().map_err(|_| err("a qualified name", s));
            match fields.first().map(String::as_str) {
                Some("ns") => {
                    let [_, prefix, uri] = fields.as_slice() else {
                        return Err(err("ns <prefix> <uri>", line));
                    };
                    if !is_valid_prefix(prefix) {
                        return Err(err("a prefix", prefix));
                    }
                    reg.namespaces.insert(prefix.clone(), uri.clone());
                }
                Some("term") => {
                    if !(5..=6).contains(&fields.len()) {
                        return Err(err("term <qname> <datatype> \"label\" \"definition\" [url]", line));
                    }
                    let term = qname(&fields[1])?;
                    reg.check_prefix(&term, line_no)?;
                    let datatype = Datatype::from_name(&fields[2])
                        .ok_or_else(|| err("one of string, integer, decimal, datetime, uri, term", &fields[2]))?;
                    if reg.definitions.contains_key(&term) {
                        return Err(err("a term defined once", &fields[1]));
                    }
                    reg.definitions.insert(
                        term.clone(),
                        TermDefinition {
                            term,
                            label: fields[3].clone(),
                            definition: fields[4].clone(),
                            datatype,
                            source_url: fields.get(5).cloned(),
                        },
                    );
                }
                Some("map") => {
                    let [_, source, canonical] = fields.as_slice() else {
                        return Err(err("map <source-qname> <canonical-qname>", line));
                    };
                    pending_maps.push((
                        TermMapping {
                            source: qname(source)?,
                            canonical: qname(canonical)?,
                        },
                        line_no,
                    ));
                }
                Some(other) => return Err(err("ns, term or map", other)),
                None => {}
            }
        }
        // mappings may reference namespaces and terms declared further down
        for (m, line) in pending_maps {
            reg.add_mapping(m, line)?;
        }
        reg.check()?;
        Ok(reg)
    }

    pub fn namespaces(&self) -> &BTreeMap<String, String> {
        &self.namespaces
    }

    pub fn definitions(&self) -> impl Iterator<Item = &TermDefinition> {
        self.definitions.values()
    }

    pub fn definition(&self, term: &QualifiedName) -> Option<&TermDefinition> {
        self.definitions.get(term)
    }

    pub fn mappings(&self) -> impl Iterator<Item = TermMapping> + '_ {
        self.mappings.iter().map(|(s, c)| TermMapping {
            source: s.clone(),
            canonical: c.clone(),
        })
    }

    pub fn mapping_count(&self) -> usize {
        self.mappings.len()
    }

    /// Follows mappings to the end of the chain; unmapped terms come back
    /// unchanged.
    pub fn resolve(&self, term: &QualifiedName) -> QualifiedName {
        let mut current = term;
        // chains are acyclic, so this terminates
        while let Some(next) = self.mappings.get(current) {
            current = next;
        }
        current.clone()
    }

    /// Every term (including `canonical` itself) that resolves to the same
    /// canonical term as `canonical`.
    pub fn equivalents(&self, term: &QualifiedName) -> BTreeSet<QualifiedName> {
        let target = self.resolve(term);
        let mut out: BTreeSet<QualifiedName> = self
            .mappings
            .keys()
            .filter(|s| self.resolve(s) == target)
            .cloned()
            .collect();
        out.insert(target);
        out
    }

    /// Layers `overlay` on top of this registry. Overlay namespaces,
    /// definitions and mappings win where both define the same key.
    pub fn overlay(&self, overlay: &Registry) -> Result<Registry> {
        let mut merged = self.clone();
        merged.namespaces.extend(overlay.namespaces.clone());
        merged.definitions.extend(overlay.definitions.clone());
        merged.mappings.extend(overlay.mappings.clone());
        merged.check()?;
        Ok(merged)
    }
}

/// Splits a registry line into whitespace-separated fields, honouring
/// double-quoted strings with `\"` and `\\` escapes.
fn split_fields(line: &str) -> std::result::Result<Vec<String>, (usize, &'static str)> {
    let mut fields = Vec::new();
    let mut chars = line.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        let mut field = String::new();
        if c == '"' {
            chars.next();
            let mut closed = false;
            while let Some((_, ch)) = chars.next() {
                match ch {
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\\' => {
                        if let Some((_, esc)) = chars.next() {
                            field.push(esc);
                        }
                    }
                    other => field.push(other),
                }
            }
            if !closed {
                return Err((pos + 1, "closing '\"'"));
            }
        } else {
            while let Some(&(_, ch)) = chars.peek() {
                if ch.is_whitespace() {
                    break;
                }
                field.push(ch);
                chars.next();
            }
        }
        fields.push(field);
    }
    Ok(fields)
}

pub fn load_registry(path: impl AsRef<Path>) -> Result<Registry> {
    let text = std::fs::read_to_string(path)?;
    Registry::parse(&text)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HarmonizeOptions {
    /// Also append canonical `prov:role` values. Off by default.
    pub roles: bool,
}

pub fn harmonize(reg: &Registry, doc: &Document) -> Document {
    harmonize_with(reg, doc, HarmonizeOptions::default())
}

/// Appends the canonical equivalent of every mapped `prov:type` (and
/// optionally `prov:role`) term. Existing attributes are never removed or
/// reordered, so the operation is idempotent.
pub fn harmonize_with(reg: &Registry, doc: &Document, options: HarmonizeOptions) -> Document {
    let mut namespaces = doc.namespaces().clone();
    let mut records = doc.records().to_vec();
    for record in &mut records {
        let attrs = record.attributes_mut();
        let original = attrs.len();
        for i in 0..original {
            let key = &attrs[i].key;
            let harmonized_key = key.prefix() == PROV_PREFIX
                && (key.local() == "type" || (options.roles && key.local() == "role"));
            if !harmonized_key {
                continue;
            }
            let AttributeValue::Term(term) = &attrs[i].value else {
                continue;
            };
            let canonical = reg.resolve(term);
            if canonical == *term {
                continue;
            }
            let candidate = Attribute::new(attrs[i].key.clone(), AttributeValue::Term(canonical.clone()));
            if attrs.contains(&candidate) {
                continue;
            }
            if !doc.declares(canonical.prefix()) {
                if let Some(uri) = reg.namespaces().get(canonical.prefix()) {
                    namespaces.insert(canonical.prefix().to_string(), uri.clone());
                }
            }
            attrs.push(candidate);
        }
    }
    Document::new(namespaces, records).expect("ids are unchanged")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
# layered lexicon
ns neurolex http://neurolex.org/wiki/
ns hid http://hid/
ns site http://site/
term neurolex:T1 term "T1" "T1-weighted acquisition"
term hid:spgr term "SPGR" "spoiled gradient echo" http://hid/spgr
map site:t1w hid:spgr
map hid:spgr neurolex:T1
"#;

    fn q(s: &str) -> QualifiedName {
        s.parse().unwrap()
    }

    #[test]
    fn resolves_chains() {
        let reg = Registry::parse(SAMPLE).unwrap();
        assert_eq!(reg.resolve(&q("site:t1w")), q("neurolex:T1"));
        assert_eq!(reg.resolve(&q("hid:spgr")), q("neurolex:T1"));
        assert_eq!(reg.resolve(&q("unknown:thing")), q("unknown:thing"));
        assert_eq!(reg.definition(&q("hid:spgr")).unwrap().source_url.as_deref(), Some("http://hid/spgr"));
        let eq: Vec<_> = reg.equivalents(&q("neurolex:T1")).into_iter().map(|t| t.to_string()).collect();
        assert_eq!(eq, ["hid:spgr", "neurolex:T1", "site:t1w"]);
    }

    #[test]
    fn empty_file() {
        assert_eq!(Registry::parse("").unwrap(), Registry::empty());
    }

    #[test]
    fn cycle_detected() {
        let text = "ns a http://a/\nterm a:x term \"x\" \"x\"\nterm a:y term \"y\" \"y\"\nmap a:x a:y\nmap a:y a:x\n";
        assert!(matches!(Registry::parse(text), Err(NidmError::CycleDetected(_))));
    }

    #[test]
    fn unknown_canonical() {
        let text = "ns a http://a/\nmap a:x a:y\n";
        assert!(matches!(Registry::parse(text), Err(NidmError::UnknownCanonical(ref t)) if t.to_string() == "a:y"));
    }

    #[test]
    fn conflicting_mapping() {
        let text = "ns a http://a/\nterm a:y term \"y\" \"y\"\nterm a:z term \"z\" \"z\"\nmap a:x a:y\nmap a:x a:z\n";
        let err = Registry::parse(text).unwrap_err();
        assert!(matches!(err, NidmError::Parse(ref p) if p.span.line == 5), "{err:?}");
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(Registry::parse("ns a"), Err(NidmError::Parse(_))));
        assert!(matches!(Registry::parse("alias a b"), Err(NidmError::Parse(_))));
        assert!(matches!(Registry::parse("ns a http://a/\nterm a:x colour \"x\" \"x\""), Err(NidmError::Parse(_))));
        assert!(matches!(Registry::parse("term b:x term \"x\" \"x\""), Err(NidmError::UndeclaredPrefix { line: 1, .. })));
        assert!(matches!(Registry::parse("ns a http://a/\nterm a:x term \"x"), Err(NidmError::Parse(_))));
    }

    #[test]
    fn overlay_wins() {
        let base = Registry::parse(SAMPLE).unwrap();
        let extra = Registry::parse("ns hid http://hid/\nns x http://x/\nterm x:T1 term \"T1\" \"other\"\nmap hid:spgr x:T1\n").unwrap();
        let merged = base.overlay(&extra).unwrap();
        assert_eq!(merged.resolve(&q("site:t1w")), q("x:T1"));
    }

    #[test]
    fn harmonize_appends_canonical_types() {
        let reg = Registry::parse(SAMPLE).unwrap();
        let doc = crate::codecs::parse_provn(
            "prefix hid <http://hid/>\nprefix site <http://site/>\n\
             entity(a,[prov:type='hid:spgr'])\n\
             entity(b,[prov:type='hid:spgr', prov:type='site:t1w'])\n\
             activity(c,[prov:role='hid:spgr'])",
        )
        .unwrap();
        let out = harmonize(&reg, &doc);
        let types = |i: usize| out.records()[i].types().map(|t| t.to_string()).collect::<Vec<_>>();
        assert_eq!(types(0), ["hid:spgr", "neurolex:T1"]);
        assert_eq!(types(1), ["hid:spgr", "site:t1w", "neurolex:T1"]);
        assert_eq!(out.records()[2].attributes().len(), 1);
        assert!(out.namespaces().contains_key("neurolex"));
        assert!(crate::validate::validate(&out).is_valid());
        assert_eq!(harmonize(&reg, &out), out);

        let with_roles = harmonize_with(&reg, &doc, HarmonizeOptions { roles: true });
        assert_eq!(with_roles.records()[2].attributes().len(), 2);
    }

    #[test]
    fn harmonize_leaves_canonical_records_alone() {
        let reg = Registry::parse(SAMPLE).unwrap();
        let doc = crate::codecs::parse_provn(
            "prefix hid <http://hid/>\nprefix neurolex <http://neurolex.org/wiki/>\n\
             entity(a,[prov:type='hid:spgr', prov:type='neurolex:T1'])",
        )
        .unwrap();
        assert_eq!(harmonize(&reg, &doc), doc);
        assert_eq!(harmonize(&reg, &Document::empty()), Document::empty());
    }
}
