//! PROV-N subset reader and writer. The accepted grammar is documented in
//! `docs/provn-grammar.md`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{require_resolved, ParseError, SourceSpan};
use crate::error::{NidmError, Result};
use crate::model::{
    is_valid_id, is_valid_prefix, looks_like_uri, parse_decimal, Activity, Agent, Attribute, AttributeValue,
    Document, Entity, QualifiedName, Record, Relation, RelationKind, Timestamp, PROV_NS, PROV_PREFIX,
};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Word(String),
    /// Double-quoted string, escapes decoded.
    Str(String),
    /// Single-quoted literal.
    Quoted(String),
    Iri(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Eq,
    Semi,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("`{w}`"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Quoted(s) => format!("literal '{s}'"),
            Tok::Iri(s) => format!("<{s}>"),
            Tok::LParen => "\"(\"".into(),
            Tok::RParen => "\")\"".into(),
            Tok::LBracket => "\"[\"".into(),
            Tok::RBracket => "\"]\"".into(),
            Tok::Comma => "\",\"".into(),
            Tok::Eq => "\"=\"".into(),
            Tok::Semi => "\";\"".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    span: SourceSpan,
}

fn is_word_char(c: char) -> bool {
    !c.is_whitespace() && !matches!(c, '(' | ')' | '[' | ']' | ',' | '=' | ';' | '"' | '\'' | '<' | '>')
}

fn tokenize(text: &str) -> std::result::Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    // advances over one char, keeping line/col in step
    let step = |i: &mut usize, line: &mut usize, col: &mut usize| {
        if chars[*i] == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
        *i += 1;
    };

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            step(&mut i, &mut line, &mut col);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                step(&mut i, &mut line, &mut col);
            }
            continue;
        }
        let (start_line, start_col, start) = (line, col, i);
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            '=' => Some(Tok::Eq),
            ';' => Some(Tok::Semi),
            _ => None,
        };
        if let Some(tok) = single {
            step(&mut i, &mut line, &mut col);
            out.push(Token {
                tok,
                span: SourceSpan::new(start_line, start_col, 1),
            });
            continue;
        }
        let tok = match c {
            '"' => {
                step(&mut i, &mut line, &mut col);
                let mut s = String::new();
                loop {
                    let Some(&ch) = chars.get(i) else {
                        return Err(ParseError::new(
                            SourceSpan::new(start_line, start_col, i - start),
                            "closing '\"'",
                            "end of input",
                        ));
                    };
                    step(&mut i, &mut line, &mut col);
                    match ch {
                        '"' => break,
                        '\\' => {
                            let Some(&esc) = chars.get(i) else { continue };
                            step(&mut i, &mut line, &mut col);
                            s.push(match esc {
                                'n' => '\n',
                                't' => '\t',
                                'r' => '\r',
                                other => other,
                            });
                        }
                        other => s.push(other),
                    }
                }
                Tok::Str(s)
            }
            '\'' | '<' => {
                let close = if c == '\'' { '\'' } else { '>' };
                step(&mut i, &mut line, &mut col);
                let mut s = String::new();
                loop {
                    match chars.get(i) {
                        Some(&ch) if ch == close => {
                            step(&mut i, &mut line, &mut col);
                            break;
                        }
                        Some(&ch) if ch != '\n' => {
                            s.push(ch);
                            step(&mut i, &mut line, &mut col);
                        }
                        _ => {
                            return Err(ParseError::new(
                                SourceSpan::new(start_line, start_col, i - start),
                                format!("closing '{close}'"),
                                "end of line",
                            ))
                        }
                    }
                }
                if c == '\'' {
                    Tok::Quoted(s)
                } else {
                    Tok::Iri(s)
                }
            }
            '>' => {
                return Err(ParseError::new(
                    SourceSpan::new(line, col, 1),
                    "a statement",
                    "\">\"",
                ))
            }
            _ => {
                let mut w = String::new();
                while i < chars.len() && is_word_char(chars[i]) {
                    if chars[i] == '/' && chars.get(i + 1) == Some(&'/') {
                        break;
                    }
                    w.push(chars[i]);
                    step(&mut i, &mut line, &mut col);
                }
                Tok::Word(w)
            }
        };
        out.push(Token {
            tok,
            span: SourceSpan::new(start_line, start_col, i - start),
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        span: SourceSpan::new(line, col, 0),
    });
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    namespaces: BTreeMap<String, String>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: impl Into<String>) -> NidmError {
        let t = self.peek();
        ParseError::new(t.span, expected, t.tok.describe()).into()
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<()> {
        if self.peek().tok == tok {
            self.next();
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if &self.peek().tok == tok {
            self.next();
            true
        } else {
            false
        }
    }

    fn word(&mut self, expected: &str) -> Result<(String, SourceSpan)> {
        match &self.peek().tok {
            Tok::Word(w) => {
                let w = w.clone();
                let span = self.next().span;
                Ok((w, span))
            }
            _ => Err(self.error(expected)),
        }
    }

    fn identifier(&mut self) -> Result<String> {
        let (w, span) = self.word("an identifier")?;
        if !is_valid_id(&w) {
            return Err(ParseError::new(span, "an identifier", format!("`{w}`")).into());
        }
        Ok(w)
    }

    /// An identifier or `-` for "absent".
    fn optional_identifier(&mut self) -> Result<Option<String>> {
        if matches!(&self.peek().tok, Tok::Word(w) if w == "-") {
            self.next();
            return Ok(None);
        }
        self.identifier().map(Some)
    }

    fn check_prefix(&self, prefix: &str, span: SourceSpan) -> Result<()> {
        if prefix == PROV_PREFIX || self.namespaces.contains_key(prefix) {
            Ok(())
        } else {
            Err(NidmError::UndeclaredPrefix {
                prefix: prefix.to_string(),
                line: span.line,
                column: span.column,
            })
        }
    }

    fn qualified_name(&mut self, text: &str, span: SourceSpan) -> Result<QualifiedName> {
        let name: QualifiedName = text
            .parse()
            .map_err(|_| NidmError::from(ParseError::new(span, "a qualified name prefix:local", format!("`{text}`"))))?;
        self.check_prefix(name.prefix(), span)?;
        Ok(name)
    }

    fn timestamp(&mut self) -> Result<Option<Timestamp>> {
        let t = self.peek().clone();
        let text = match &t.tok {
            Tok::Word(w) if w == "-" => {
                self.next();
                return Ok(None);
            }
            Tok::Word(w) | Tok::Str(w) => w.clone(),
            _ => return Err(self.error("a timestamp or \"-\"")),
        };
        match Timestamp::parse(&text) {
            Some(ts) => {
                self.next();
                Ok(Some(ts))
            }
            None => Err(ParseError::new(t.span, "a timestamp", t.tok.describe()).into()),
        }
    }

    fn attributes(&mut self) -> Result<Vec<Attribute>> {
        self.expect(Tok::LBracket, "\"[\"")?;
        let mut attrs = Vec::new();
        if self.eat(&Tok::RBracket) {
            return Ok(attrs);
        }
        loop {
            let (key_text, key_span) = self.word("an attribute name")?;
            let key = self.qualified_name(&key_text, key_span)?;
            self.expect(Tok::Eq, "\"=\"")?;
            let value = self.value()?;
            attrs.push(Attribute::new(key, value));
            if self.eat(&Tok::RBracket) {
                return Ok(attrs);
            }
            self.expect(Tok::Comma, "\",\" or \"]\"")?;
        }
    }

    fn value(&mut self) -> Result<AttributeValue> {
        let t = self.next();
        match t.tok {
            Tok::Str(s) => {
                if matches!(self.peek_at(0), Tok::Word(w) if w == "%%") {
                    self.next();
                    let (datatype, span) = self.word("a datatype")?;
                    return match datatype.as_str() {
                        "xsd:string" => Ok(AttributeValue::Text(s)),
                        "xsd:anyURI" => Ok(AttributeValue::Uri(s)),
                        "xsd:decimal" => parse_decimal(&s)
                            .map(AttributeValue::Number)
                            .ok_or_else(|| ParseError::new(t.span, "a decimal", format!("\"{s}\"")).into()),
                        other => Err(ParseError::new(span, "xsd:string, xsd:anyURI or xsd:decimal", format!("`{other}`")).into()),
                    };
                }
                if looks_like_uri(&s) {
                    Ok(AttributeValue::Uri(s))
                } else {
                    Ok(AttributeValue::Text(s))
                }
            }
            Tok::Quoted(s) => {
                if looks_like_uri(&s) {
                    Ok(AttributeValue::Uri(s))
                } else if let Some(d) = parse_decimal(&s) {
                    Ok(AttributeValue::Number(d))
                } else if let Ok(q) = s.parse::<QualifiedName>() {
                    self.check_prefix(q.prefix(), t.span)?;
                    Ok(AttributeValue::Term(q))
                } else {
                    Ok(AttributeValue::Text(s))
                }
            }
            Tok::Word(w) => match parse_decimal(&w) {
                Some(d) => Ok(AttributeValue::Number(d)),
                None => Err(ParseError::new(t.span, "a quoted value or number", format!("`{w}`")).into()),
            },
            other => Err(ParseError::new(t.span, "an attribute value", other.describe()).into()),
        }
    }

    /// `prefix <p> <uri>` lines before the first statement.
    fn prefix_block(&mut self) -> Result<()> {
        while matches!(&self.peek().tok, Tok::Word(w) if w == "prefix") {
            self.next();
            let (prefix, span) = self.word("a prefix name")?;
            if !is_valid_prefix(&prefix) {
                return Err(ParseError::new(span, "a prefix name", format!("`{prefix}`")).into());
            }
            let uri = match self.next() {
                Token { tok: Tok::Iri(u), .. } => u,
                t => return Err(ParseError::new(t.span, "a namespace IRI in <...>", t.tok.describe()).into()),
            };
            if prefix == PROV_PREFIX {
                if uri != PROV_NS {
                    return Err(ParseError::new(span, format!("prov bound to <{PROV_NS}>"), format!("<{uri}>")).into());
                }
                continue;
            }
            self.namespaces.insert(prefix, uri);
        }
        Ok(())
    }

    fn statement(&mut self) -> Result<Record> {
        let (keyword, span) = self.word("a statement")?;
        self.expect(Tok::LParen, "\"(\"")?;
        let record = match keyword.as_str() {
            "entity" => {
                let id = self.identifier()?;
                let attributes = self.trailing_attributes()?;
                Record::Entity(Entity { id, attributes })
            }
            "agent" => {
                let id = self.identifier()?;
                let attributes = self.trailing_attributes()?;
                Record::Agent(Agent { id, attributes })
            }
            "activity" => {
                let id = self.identifier()?;
                let (mut start, mut end) = (None, None);
                if self.peek().tok == Tok::Comma && *self.peek_at(1) != Tok::LBracket {
                    self.next();
                    start = self.timestamp()?;
                    self.expect(Tok::Comma, "\",\"")?;
                    end = self.timestamp()?;
                }
                let attributes = self.trailing_attributes()?;
                Record::Activity(Activity {
                    id,
                    start,
                    end,
                    attributes,
                })
            }
            other => match RelationKind::from_name(other) {
                Some(kind) => Record::Relation(self.relation(kind)?),
                None => {
                    return Err(ParseError::new(span, "a statement keyword", format!("`{other}`")).into());
                }
            },
        };
        self.expect(Tok::RParen, "\",\" or \")\"")?;
        Ok(record)
    }

    /// `, [attrs]` before the closing parenthesis, or nothing.
    fn trailing_attributes(&mut self) -> Result<Vec<Attribute>> {
        if self.peek().tok == Tok::Comma && *self.peek_at(1) == Tok::LBracket {
            self.next();
            self.attributes()
        } else {
            Ok(Vec::new())
        }
    }

    fn relation(&mut self, kind: RelationKind) -> Result<Relation> {
        // `id;` form, accepted for every kind
        let mut id = None;
        let mut explicit_id = false;
        if matches!(self.peek_at(0), Tok::Word(_)) && *self.peek_at(1) == Tok::Semi {
            id = self.optional_identifier()?;
            self.next();
            explicit_id = true;
        }
        let positional_id = matches!(kind, RelationKind::Used | RelationKind::WasAssociatedWith);
        if positional_id && !explicit_id {
            id = self.optional_identifier()?;
            self.expect(Tok::Comma, "\",\"")?;
        }
        let subject = self.identifier()?;
        self.expect(Tok::Comma, "\",\"")?;
        let object = self.identifier()?;
        let mut rel = Relation::new(kind, subject, object);
        rel.id = id;

        if self.peek().tok == Tok::Comma && *self.peek_at(1) != Tok::LBracket {
            if kind.allows_time() {
                self.next();
                rel.time = self.timestamp()?;
            } else if kind.allows_plan() {
                self.next();
                rel.plan = self.optional_identifier()?;
            } else {
                self.next();
                return Err(self.error("\"[\""));
            }
        }
        rel.attributes = self.trailing_attributes()?;
        Ok(rel)
    }
}

pub fn parse_provn(text: &str) -> Result<Document> {
    let tokens = tokenize(text)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        namespaces: BTreeMap::new(),
    };
    p.prefix_block()?;
    let mut records = Vec::new();
    while p.peek().tok != Tok::Eof {
        if matches!(&p.peek().tok, Tok::Word(w) if w == "prefix") {
            return Err(p.error("a statement (prefix declarations must come first)"));
        }
        records.push(p.statement()?);
    }
    Document::new(p.namespaces, records)
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            other => out.push(other),
        }
    }
    out.push('"');
    out
}

fn write_value(v: &AttributeValue) -> String {
    match v {
        AttributeValue::Term(q) => format!("'{q}'"),
        AttributeValue::Number(d) => d.to_string(),
        AttributeValue::Uri(u) if looks_like_uri(u) => quote(u),
        AttributeValue::Uri(u) => format!("{} %% xsd:anyURI", quote(u)),
        AttributeValue::Text(t) if looks_like_uri(t) => format!("{} %% xsd:string", quote(t)),
        AttributeValue::Text(t) => quote(t),
    }
}

/// Writes `[k=v, ...]`, one attribute per line aligned after the bracket
/// once there is more than one.
fn write_attributes(out: &mut String, attrs: &[Attribute], indent: usize) {
    out.push('[');
    for (i, a) in attrs.iter().enumerate() {
        if i > 0 {
            out.push_str(",\n");
            out.push_str(&" ".repeat(indent + 1));
        }
        let _ = write!(out, "{}={}", a.key, write_value(&a.value));
    }
    out.push(']');
}

fn write_time(t: Option<Timestamp>) -> String {
    t.map_or_else(|| "-".to_string(), |t| t.to_iso())
}

fn write_record(out: &mut String, record: &Record) {
    match record {
        Record::Entity(Entity { id, attributes }) | Record::Agent(Agent { id, attributes }) => {
            let keyword = if matches!(record, Record::Entity(_)) { "entity" } else { "agent" };
            let head = format!("{keyword}({id}");
            out.push_str(&head);
            if !attributes.is_empty() {
                out.push(',');
                write_attributes(out, attributes, head.len() + 1);
            }
            out.push(')');
        }
        Record::Activity(a) => {
            let head = format!("activity({}", a.id);
            out.push_str(&head);
            if a.start.is_some() || a.end.is_some() {
                let _ = write!(out, ", {}, {}", write_time(a.start), write_time(a.end));
            }
            if !a.attributes.is_empty() {
                out.push_str(",\n");
                let indent = 9;
                out.push_str(&" ".repeat(indent));
                write_attributes(out, &a.attributes, indent);
            }
            out.push(')');
        }
        Record::Relation(r) => {
            let mut head = format!("{}(", r.kind);
            match r.kind {
                RelationKind::Used | RelationKind::WasAssociatedWith => {
                    let _ = write!(head, "{}, ", r.id.as_deref().unwrap_or("-"));
                }
                _ => {
                    if let Some(id) = &r.id {
                        let _ = write!(head, "{id}; ");
                    }
                }
            }
            let _ = write!(head, "{}, {}", r.subject, r.object);
            // optional third position; `-` keeps later positions aligned
            let third = if r.kind.allows_time() {
                r.time.map(|t| t.to_iso())
            } else if r.kind.allows_plan() {
                r.plan.clone()
            } else {
                None
            };
            match (third, r.attributes.is_empty()) {
                (Some(t), _) => {
                    let _ = write!(head, ", {t}");
                }
                (None, false) if r.kind.allows_time() || r.kind.allows_plan() => head.push_str(", -"),
                _ => {}
            }
            out.push_str(&head);
            if !r.attributes.is_empty() {
                out.push_str(",\n");
                let indent = r.kind.name().len() + 1;
                out.push_str(&" ".repeat(indent));
                write_attributes(out, &r.attributes, indent);
            }
            out.push(')');
        }
    }
}

/// Writes the document without checking references.
pub fn write_provn(doc: &Document) -> String {
    let mut out = String::new();
    for (prefix, uri) in doc.namespaces() {
        let _ = writeln!(out, "prefix {prefix} <{uri}>");
    }
    if !doc.namespaces().is_empty() && !doc.is_empty() {
        out.push('\n');
    }
    for record in doc.records() {
        write_record(&mut out, record);
        out.push('\n');
    }
    out
}

pub fn serialize_provn(doc: &Document) -> Result<String> {
    require_resolved(doc)?;
    Ok(write_provn(doc))
}

#[cfg(test)]
mod tests {
    use super::*;

    const PREFIXES: &str = "prefix hid <http://hid.birn/terms#>\n\
        prefix neurolex <http://neurolex.org/wiki/>\n\
        prefix nidm <http://www.incf.org/ns/nidash/nidm#>\n";

    fn q(s: &str) -> QualifiedName {
        s.parse().unwrap()
    }

    #[test]
    fn plan_statement() {
        let text = format!(
            "{PREFIXES}entity(plan_1,[prov:type='prov:Plan',
               prov:type='neurolex:Handedness_Form',
               prov:type='hid:Edinburgh_Handedness',
               prov:label=\"Subject Handedness Form\",
               nidm:url=\"http://myform.com/Edinburgh.pdf\"])"
        );
        let doc = parse_provn(&text).unwrap();
        let Record::Entity(e) = &doc.records()[0] else { panic!() };
        assert_eq!(e.id, "plan_1");
        let types: Vec<_> = doc.records()[0].types().map(|t| t.to_string()).collect();
        assert_eq!(types, ["prov:Plan", "neurolex:Handedness_Form", "hid:Edinburgh_Handedness"]);
        assert_eq!(e.attributes[3].value, AttributeValue::Text("Subject Handedness Form".into()));
        assert_eq!(e.attributes[4].key, q("nidm:url"));
        assert_eq!(e.attributes[4].value, AttributeValue::Uri("http://myform.com/Edinburgh.pdf".into()));
    }

    #[test]
    fn association_without_plan() {
        let text = "prefix neurolex <http://neurolex.org/wiki/>\n\
            wasAssociatedWith(wAW_1, acquisition_3, person_1, -,\n  [prov:role='neurolex:Radiology_Technician'])";
        let doc = parse_provn(text).unwrap();
        let r = doc.records()[0].as_relation().unwrap();
        assert_eq!(r.kind, RelationKind::WasAssociatedWith);
        assert_eq!(r.id.as_deref(), Some("wAW_1"));
        assert_eq!((r.subject.as_str(), r.object.as_str()), ("acquisition_3", "person_1"));
        assert_eq!(r.plan, None);
        assert_eq!(r.attributes[0].value, AttributeValue::Term(q("neurolex:Radiology_Technician")));
    }

    #[test]
    fn empty_attribute_list() {
        let doc = parse_provn("entity(e0,[])").unwrap();
        assert_eq!(doc.records()[0], Record::Entity(Entity::new("e0", vec![])));
    }

    #[test]
    fn truncated_statement() {
        let err = parse_provn("entity(plan_1").unwrap_err();
        let NidmError::Parse(p) = err else { panic!("{err:?}") };
        assert_eq!(p.expected, "\",\" or \")\"");
        assert_eq!(p.found, "end of input");
        assert_eq!((p.span.line, p.span.column), (1, 14));
    }

    #[test]
    fn undeclared_prefix_rejected() {
        let err = parse_provn("entity(e,[prov:type='xnat:mprage'])").unwrap_err();
        assert!(matches!(err, NidmError::UndeclaredPrefix { ref prefix, line: 1, column: 21 } if prefix == "xnat"));
        let err = parse_provn("entity(e,[xnat:k=\"v\"])").unwrap_err();
        assert!(matches!(err, NidmError::UndeclaredPrefix { .. }));
    }

    #[test]
    fn single_quoted_literals_are_classified() {
        let text = format!(
            "{PREFIXES}entity(value_4,[prov:label='Repetition Time', prov:value='2.0', nidm:loc='http://x.org/T1.nii.gz'])"
        );
        let doc = parse_provn(&text).unwrap();
        let attrs = doc.records()[0].attributes();
        assert_eq!(attrs[0].value, AttributeValue::Text("Repetition Time".into()));
        assert_eq!(attrs[1].value, AttributeValue::Number(parse_decimal("2.0").unwrap()));
        assert_eq!(attrs[2].value, AttributeValue::Uri("http://x.org/T1.nii.gz".into()));
    }

    #[test]
    fn relation_forms() {
        let text = "entity(e)\nentity(f)\nactivity(a, 2001-01-01T00:00:00, -)\nagent(p)\n\
            used(u_1, a, e, 2001-01-01T00:00:01)\n\
            used(-, a, f)\n\
            wasGeneratedBy(g_1; f, a, -, [prov:label=\"x\"])\n\
            wasGeneratedBy(e, a)\n\
            wasDerivedFrom(d_1; f, e)\n\
            wasAttributedTo(e, p)\n\
            actedOnBehalfOf(p, p)\n\
            wasInformedBy(a, a)\n";
        let doc = parse_provn(text).unwrap();
        let rels: Vec<_> = doc.relations().collect();
        assert_eq!(rels.len(), 8);
        assert_eq!(rels[0].id.as_deref(), Some("u_1"));
        assert!(rels[0].time.is_some());
        assert_eq!(rels[1].id, None);
        assert_eq!(rels[2].id.as_deref(), Some("g_1"));
        assert_eq!(rels[2].time, None);
        assert_eq!(rels[2].attributes.len(), 1);
        assert_eq!(rels[4].id.as_deref(), Some("d_1"));
        let again = parse_provn(&write_provn(&doc)).unwrap();
        assert_eq!(again, doc);
    }

    #[test]
    fn statement_layout() {
        let text = format!("{PREFIXES}agent(person_1,[prov:type='prov:Person', prov:label=\"Person\"])");
        let doc = parse_provn(&text).unwrap();
        let out = serialize_provn(&doc).unwrap();
        assert!(out.contains("agent(person_1,[prov:type='prov:Person',\n                prov:label=\"Person\"])\n"), "{out}");
        assert_eq!(out.matches("agent(").count(), 1);
    }

    #[test]
    fn typed_literals_preserve_kind() {
        let doc = Document::new(
            BTreeMap::new(),
            vec![Record::Entity(Entity::new(
                "e",
                vec![
                    Attribute::new(q("prov:label"), AttributeValue::Text("http://looks.like/uri".into())),
                    Attribute::new(q("prov:location"), AttributeValue::Uri("urn:isbn:1".into())),
                    Attribute::new(q("prov:value"), AttributeValue::Text("line\n\"two\"".into())),
                ],
            ))],
        )
        .unwrap();
        assert_eq!(parse_provn(&write_provn(&doc)).unwrap(), doc);
    }

    #[test]
    fn empty_document_writes_only_prefixes() {
        let doc = parse_provn(PREFIXES).unwrap();
        assert_eq!(serialize_provn(&doc).unwrap(), PREFIXES);
        assert_eq!(serialize_provn(&Document::empty()).unwrap(), "");
    }

    #[test]
    fn dangling_reference_refused_by_serializer() {
        let doc = parse_provn("entity(e)\nwasGeneratedBy(e, nowhere)").unwrap();
        assert!(matches!(serialize_provn(&doc), Err(NidmError::InvalidDocument(_))));
    }

    #[test]
    fn unknown_keyword() {
        let err = parse_provn("bundle(b)").unwrap_err();
        let NidmError::Parse(p) = err else { panic!() };
        assert_eq!(p.expected, "a statement keyword");
    }
}
