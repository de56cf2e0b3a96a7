//! Provenance XML in two flavours. `Canonical` round-trips exactly;
//! `SpmLegacy` reproduces what the SPM batch extraction tool writes (the
//! `ni` prefix, `07-Jun-2012 14:06:39` timestamps, every scalar typed as
//! `xsd:string`).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{require_resolved, ParseError, SourceSpan};
use crate::error::{NidmError, Result};
use crate::model::{
    parse_decimal, Activity, Agent, Attribute, AttributeValue, Document, Entity, QualifiedName, Record, Relation,
    RelationKind, Timestamp, NIDM_NS, NIDM_PREFIX, NI_PREFIX, PROV_NS, PROV_PREFIX,
};

const XSI_NS: &str = "http://www.w3.org/2001/XMLSchema-instance";
const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum XmlMode {
    Canonical,
    SpmLegacy,
}

impl XmlMode {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "canonical" => Some(XmlMode::Canonical),
            "spm-legacy" | "spm" => Some(XmlMode::SpmLegacy),
            _ => None,
        }
    }
}

struct Writer {
    mode: XmlMode,
    out: String,
}

impl Writer {
    fn name(&self, q: &QualifiedName) -> String {
        if self.mode == XmlMode::SpmLegacy && q.prefix() == NIDM_PREFIX {
            q.with_prefix(NI_PREFIX).to_string()
        } else {
            q.to_string()
        }
    }

    fn time(&self, t: Timestamp) -> String {
        match self.mode {
            XmlMode::Canonical => t.to_iso(),
            XmlMode::SpmLegacy => t.to_spm(),
        }
    }

    fn attribute(&mut self, a: &Attribute) {
        let name = self.name(&a.key);
        let is_label = a.key.prefix() == PROV_PREFIX && a.key.local() == "label";
        let xsi = match (&a.value, self.mode) {
            (AttributeValue::Text(_), _) if is_label => None,
            (AttributeValue::Text(_), _) => Some("xsd:string"),
            (AttributeValue::Number(_), XmlMode::Canonical) => Some("xsd:decimal"),
            (AttributeValue::Number(_), XmlMode::SpmLegacy) => Some("xsd:string"),
            (AttributeValue::Term(_), _) => Some("xsd:QName"),
            (AttributeValue::Uri(_), _) => Some("xsd:anyURI"),
        };
        let _ = write!(self.out, "    <{name}");
        if let Some(t) = xsi {
            let _ = write!(self.out, " xsi:type=\"{t}\"");
        }
        let _ = writeln!(self.out, ">{}</{name}>", escape(a.value.lexical().as_str()));
    }

    fn open(&mut self, element: &str, id: Option<&str>, empty: bool) {
        let _ = write!(self.out, "  <prov:{element}");
        if let Some(id) = id {
            let _ = write!(self.out, " prov:id=\"{}\"", escape(id));
        }
        self.out.push_str(if empty { "/>\n" } else { ">\n" });
    }

    fn record(&mut self, record: &Record) {
        match record {
            Record::Entity(Entity { id, attributes }) | Record::Agent(Agent { id, attributes }) => {
                let element = if matches!(record, Record::Entity(_)) { "entity" } else { "agent" };
                self.open(element, Some(id), attributes.is_empty());
                if !attributes.is_empty() {
                    attributes.iter().for_each(|a| self.attribute(a));
                    let _ = writeln!(self.out, "  </prov:{element}>");
                }
            }
            Record::Activity(a) => {
                let empty = a.start.is_none() && a.end.is_none() && a.attributes.is_empty();
                self.open("activity", Some(&a.id), empty);
                if empty {
                    return;
                }
                if let Some(t) = a.start {
                    let _ = writeln!(self.out, "    <prov:startTime>{}</prov:startTime>", self.time(t));
                }
                if let Some(t) = a.end {
                    let _ = writeln!(self.out, "    <prov:endTime>{}</prov:endTime>", self.time(t));
                }
                a.attributes.iter().for_each(|at| self.attribute(at));
                self.out.push_str("  </prov:activity>\n");
            }
            Record::Relation(r) => {
                let (subject_role, object_role) = r.kind.role_names();
                self.open(r.kind.name(), r.id.as_deref(), false);
                let _ = writeln!(self.out, "    <prov:{subject_role} prov:ref=\"{}\"/>", escape(r.subject.as_str()));
                let _ = writeln!(self.out, "    <prov:{object_role} prov:ref=\"{}\"/>", escape(r.object.as_str()));
                if let Some(plan) = &r.plan {
                    let _ = writeln!(self.out, "    <prov:plan prov:ref=\"{}\"/>", escape(plan.as_str()));
                }
                if let Some(t) = r.time {
                    let _ = writeln!(self.out, "    <prov:time>{}</prov:time>", self.time(t));
                }
                r.attributes.iter().for_each(|a| self.attribute(a));
                let _ = writeln!(self.out, "  </prov:{}>", r.kind.name());
            }
        }
    }
}

/// Writes the document without checking references.
pub fn write_xml(doc: &Document, mode: XmlMode) -> String {
    let mut w = Writer {
        mode,
        out: String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"),
    };
    let _ = write!(
        w.out,
        "<prov:document xmlns:prov=\"{PROV_NS}\" xmlns:xsi=\"{XSI_NS}\" xmlns:xsd=\"{XSD_NS}\""
    );
    for (prefix, uri) in doc.namespaces() {
        let prefix = if mode == XmlMode::SpmLegacy && prefix == NIDM_PREFIX {
            NI_PREFIX
        } else {
            prefix.as_str()
        };
        let _ = write!(w.out, " xmlns:{prefix}=\"{}\"", escape(uri.as_str()));
    }
    if doc.is_empty() {
        w.out.push_str("/>\n");
        return w.out;
    }
    w.out.push_str(">\n");
    doc.records().iter().for_each(|r| w.record(r));
    w.out.push_str("</prov:document>\n");
    w.out
}

pub fn serialize_xml(doc: &Document, mode: XmlMode) -> Result<String> {
    require_resolved(doc)?;
    Ok(write_xml(doc, mode))
}

/// Minimal element tree; text is kept verbatim so values with surrounding
/// whitespace survive.
#[derive(Debug)]
struct Element {
    name: String,
    attrs: Vec<(String, String)>,
    children: Vec<Element>,
    text: String,
    span: SourceSpan,
}

impl Element {
    fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }
}

fn line_col(text: &str, offset: usize) -> SourceSpan {
    let offset = offset.min(text.len());
    let before = &text.as_bytes()[..offset];
    let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
    let line_start = before.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    let column = String::from_utf8_lossy(&before[line_start..]).chars().count() + 1;
    SourceSpan::new(line, column, 0)
}

fn read_tree(text: &str) -> Result<Element> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(false);
    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;

    let xml_error = |reader: &Reader<&[u8]>, e: &dyn std::fmt::Display| -> NidmError {
        let span = line_col(text, reader.error_position() as usize);
        ParseError::new(span, "well-formed XML", e.to_string()).into()
    };

    let open = |start: &BytesStart, offset: usize| -> Result<Element> {
        let name = String::from_utf8_lossy(start.name().as_ref()).into_owned();
        let mut attrs = Vec::new();
        for attr in start.attributes() {
            let attr = attr.map_err(|e| {
                NidmError::from(ParseError::new(line_col(text, offset), "a well-formed attribute", e.to_string()))
            })?;
            let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
            let value = attr
                .unescape_value()
                .map_err(|e| NidmError::from(ParseError::new(line_col(text, offset), "an attribute value", e.to_string())))?
                .into_owned();
            attrs.push((key, value));
        }
        Ok(Element {
            name,
            attrs,
            children: Vec::new(),
            text: String::new(),
            span: line_col(text, offset),
        })
    };

    loop {
        let offset = reader.buffer_position() as usize;
        let event = reader.read_event().map_err(|e| xml_error(&reader, &e))?;
        match event {
            Event::Start(start) => {
                if root.is_some() {
                    return Err(ParseError::new(line_col(text, offset), "end of document", "a second root element").into());
                }
                stack.push(open(&start, offset)?);
            }
            Event::Empty(start) => {
                let element = open(&start, offset)?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(element),
                    None if root.is_none() => root = Some(element),
                    None => {
                        return Err(ParseError::new(line_col(text, offset), "end of document", "a second root element").into())
                    }
                }
            }
            Event::End(_) => {
                let element = stack.pop().expect("reader checks end tags");
                match stack.last_mut() {
                    Some(parent) => parent.children.push(element),
                    None => root = Some(element),
                }
            }
            Event::Text(t) => {
                let s = t.unescape().map_err(|e| xml_error(&reader, &e))?;
                match stack.last_mut() {
                    Some(el) => el.text.push_str(&s),
                    None if s.trim().is_empty() => {}
                    None => {
                        return Err(ParseError::new(line_col(text, offset), "an element", "text outside the root").into())
                    }
                }
            }
            Event::CData(c) => {
                if let Some(el) = stack.last_mut() {
                    el.text.push_str(&String::from_utf8_lossy(&c.into_inner()));
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err(ParseError::new(line_col(text, text.len()), "a closing tag", "end of input").into());
    }
    root.ok_or_else(|| ParseError::new(SourceSpan::new(1, 1, 0), "a root element", "end of input").into())
}

struct Interpreter {
    namespaces: BTreeMap<String, String>,
    legacy: bool,
    /// Legacy `ni` names are read back as `nidm`.
    rename_ni: bool,
}

impl Interpreter {
    fn qname(&self, raw: &str, el: &Element, path: &str) -> Result<QualifiedName> {
        let q: QualifiedName = raw
            .parse()
            .map_err(|_| NidmError::from(ParseError::new(el.span, "a qualified name", format!("`{raw}`")).at_path(path)))?;
        let q = if self.rename_ni && q.prefix() == NI_PREFIX {
            q.with_prefix(NIDM_PREFIX)
        } else {
            q
        };
        if q.prefix() != PROV_PREFIX && !self.namespaces.contains_key(q.prefix()) {
            return Err(NidmError::UndeclaredPrefix {
                prefix: q.prefix().to_string(),
                line: el.span.line,
                column: el.span.column,
            });
        }
        Ok(q)
    }

    fn id(&self, el: &Element, attr: &str, path: &str) -> Result<String> {
        el.attr(attr).map(str::to_string).ok_or_else(|| {
            ParseError::new(el.span, format!("attribute {attr}"), format!("<{}> without it", el.name))
                .at_path(path)
                .into()
        })
    }

    fn time(&self, el: &Element, path: &str) -> Result<Timestamp> {
        Timestamp::parse(&el.text).ok_or_else(|| {
            ParseError::new(el.span, "a timestamp", format!("`{}`", el.text.trim()))
                .at_path(path)
                .into()
        })
    }

    fn attribute(&self, el: &Element, path: &str) -> Result<Attribute> {
        let key = self.qname(&el.name, el, path)?;
        let text = el.text.as_str();
        let value = match el.attr("xsi:type") {
            Some("xsd:decimal") => AttributeValue::Number(parse_decimal(text.trim()).ok_or_else(|| {
                NidmError::from(ParseError::new(el.span, "a decimal", format!("`{text}`")).at_path(path))
            })?),
            Some("xsd:QName") => AttributeValue::Term(self.qname(text.trim(), el, path)?),
            Some("xsd:anyURI") => AttributeValue::Uri(text.to_string()),
            _ if self.legacy => AttributeValue::sniff(text),
            _ => AttributeValue::Text(text.to_string()),
        };
        Ok(Attribute::new(key, value))
    }

    fn record(&self, el: &Element, path: &str) -> Result<Record> {
        let unknown = || NidmError::UnknownElement {
            element: el.name.clone(),
            path: path.to_string(),
        };
        let local = el.name.strip_prefix("prov:").ok_or_else(unknown)?;
        match local {
            "entity" | "agent" => {
                let id = self.id(el, "prov:id", path)?;
                let attributes = el
                    .children
                    .iter()
                    .enumerate()
                    .map(|(i, c)| self.attribute(c, &format!("{path}/{}[{}]", c.name, i + 1)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(if local == "entity" {
                    Record::Entity(Entity { id, attributes })
                } else {
                    Record::Agent(Agent { id, attributes })
                })
            }
            "activity" => {
                let mut activity = Activity {
                    id: self.id(el, "prov:id", path)?,
                    start: None,
                    end: None,
                    attributes: Vec::new(),
                };
                for (i, c) in el.children.iter().enumerate() {
                    let child_path = format!("{path}/{}[{}]", c.name, i + 1);
                    match c.name.as_str() {
                        "prov:startTime" => activity.start = Some(self.time(c, &child_path)?),
                        "prov:endTime" => activity.end = Some(self.time(c, &child_path)?),
                        _ => activity.attributes.push(self.attribute(c, &child_path)?),
                    }
                }
                Ok(Record::Activity(activity))
            }
            other => {
                let kind = RelationKind::from_name(other).ok_or_else(unknown)?;
                self.relation(kind, el, path).map(Record::Relation)
            }
        }
    }

    fn relation(&self, kind: RelationKind, el: &Element, path: &str) -> Result<Relation> {
        let (subject_role, object_role) = kind.role_names();
        let (mut subject, mut object) = (None, None);
        let mut rel = Relation::new(kind, "", "");
        rel.id = el.attr("prov:id").map(str::to_string);
        for (i, c) in el.children.iter().enumerate() {
            let child_path = format!("{path}/{}[{}]", c.name, i + 1);
            let role = c.name.strip_prefix("prov:");
            match (role, c.attr("prov:ref")) {
                (Some(r), Some(id)) if r == subject_role && subject.is_none() => subject = Some(id.to_string()),
                (Some(r), Some(id)) if r == object_role && object.is_none() => object = Some(id.to_string()),
                (Some("plan"), Some(id)) if kind.allows_plan() => rel.plan = Some(id.to_string()),
                (Some("time"), None) if kind.allows_time() => rel.time = Some(self.time(c, &child_path)?),
                _ => rel.attributes.push(self.attribute(c, &child_path)?),
            }
        }
        let missing = |role: &str| {
            NidmError::from(
                ParseError::new(el.span, format!("a prov:{role} reference"), format!("<{}> without it", el.name))
                    .at_path(path),
            )
        };
        rel.subject = subject.ok_or_else(|| missing(subject_role))?;
        rel.object = object.ok_or_else(|| missing(object_role))?;
        Ok(rel)
    }
}

/// Reads either flavour. A root that declares the `ni` prefix is taken as
/// SPM-legacy output: untyped and `xsd:string` values are classified by
/// content and `ni` terms are mapped back to `nidm`.
pub fn parse_xml(text: &str) -> Result<Document> {
    let root = read_tree(text)?;
    let mut namespaces = BTreeMap::new();
    for (key, value) in &root.attrs {
        if let Some(prefix) = key.strip_prefix("xmlns:") {
            if matches!(prefix, "prov" | "xsi" | "xsd") {
                continue;
            }
            namespaces.insert(prefix.to_string(), value.clone());
        }
    }
    let legacy = namespaces.contains_key(NI_PREFIX);
    let rename_ni = legacy
        && !namespaces.contains_key(NIDM_PREFIX)
        && namespaces.get(NI_PREFIX).map(String::as_str) == Some(NIDM_NS);
    if rename_ni {
        let uri = namespaces.remove(NI_PREFIX).expect("checked above");
        namespaces.insert(NIDM_PREFIX.to_string(), uri);
    }
    let interp = Interpreter {
        namespaces,
        legacy,
        rename_ni,
    };
    let root_path = format!("/{}", root.name);
    let records = root
        .children
        .iter()
        .enumerate()
        .map(|(i, el)| interp.record(el, &format!("{root_path}/{}[{}]", el.name, i + 1)))
        .collect::<Result<Vec<_>>>()?;
    Document::new(interp.namespaces, records)
}
