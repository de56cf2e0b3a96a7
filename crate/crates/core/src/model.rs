//! Record types for provenance documents: qualified names, attribute
//! values, the three core structures, relations, and the document that
//! holds them.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDateTime;
use rust_decimal::Decimal;

use crate::error::{NidmError, Result};

pub const PROV_PREFIX: &str = "prov";
pub const PROV_NS: &str = "http://www.w3.org/ns/prov#";
pub const NIDM_PREFIX: &str = "nidm";
/// Legacy alias used by the SPM extraction tool output.
pub const NI_PREFIX: &str = "ni";
pub const NIDM_NS: &str = "http://www.incf.org/ns/nidash/nidm#";

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.'
}

/// Prefixes must be usable as XML namespace prefixes.
pub fn is_valid_prefix(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => chars.all(is_name_char),
        _ => false,
    }
}

pub fn is_valid_local(s: &str) -> bool {
    !s.is_empty() && s.chars().all(is_name_char)
}

/// Local record identifiers share the charset of qualified-name locals.
pub fn is_valid_id(s: &str) -> bool {
    is_valid_local(s) && s != "-"
}

/// A namespaced term such as `neurolex:T1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QualifiedName {
    prefix: String,
    local: String,
}

impl QualifiedName {
    pub fn new(prefix: impl Into<String>, local: impl Into<String>) -> Result<Self> {
        let prefix = prefix.into();
        let local = local.into();
        if !is_valid_prefix(&prefix) || !is_valid_local(&local) {
            return Err(NidmError::InvalidName(format!("{prefix}:{local}")));
        }
        Ok(QualifiedName { prefix, local })
    }

    /// Shorthand for terms in the `prov` namespace. Panics on an invalid local
    /// part, so only use it with literals.
    pub fn prov(local: &str) -> Self {
        QualifiedName::new(PROV_PREFIX, local).expect("valid prov term")
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn local(&self) -> &str {
        &self.local
    }

    pub(crate) fn with_prefix(&self, prefix: &str) -> Self {
        QualifiedName {
            prefix: prefix.to_string(),
            local: self.local.clone(),
        }
    }
}

impl fmt::Display for QualifiedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.prefix, self.local)
    }
}

impl FromStr for QualifiedName {
    type Err = NidmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some((p, l)) => QualifiedName::new(p, l),
            None => Err(NidmError::InvalidName(s.to_string())),
        }
    }
}

/// UTC instant at second precision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(NaiveDateTime);

const ISO_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
const SPM_FORMAT: &str = "%d-%b-%Y %H:%M:%S";

impl Timestamp {
    pub fn from_naive(dt: NaiveDateTime) -> Self {
        use chrono::Timelike;
        Timestamp(dt.with_nanosecond(0).unwrap_or(dt))
    }

    /// Accepts `2001-01-01T00:00:00` (optionally with a trailing `Z`),
    /// `07-Jun-2012 14:06:39`, and ctime-style `Thu Jun  7 14:06:39 [UTC] 2012`.
    pub fn parse(text: &str) -> Option<Self> {
        let t = text.trim();
        let iso = t.strip_suffix('Z').unwrap_or(t);
        if let Ok(dt) = NaiveDateTime::parse_from_str(iso, ISO_FORMAT) {
            return Some(Timestamp(dt));
        }
        let collapsed = t.split_whitespace().collect::<Vec<_>>().join(" ");
        if let Ok(dt) = NaiveDateTime::parse_from_str(&collapsed, SPM_FORMAT) {
            return Some(Timestamp(dt));
        }
        let no_zone = collapsed.replace(" UTC ", " ");
        NaiveDateTime::parse_from_str(&no_zone, "%a %b %e %H:%M:%S %Y")
            .ok()
            .map(Timestamp)
    }

    pub fn to_iso(&self) -> String {
        self.0.format(ISO_FORMAT).to_string()
    }

    /// The `07-Jun-2012 14:06:39` form written by the SPM batch tool.
    pub fn to_spm(&self) -> String {
        self.0.format(SPM_FORMAT).to_string()
    }

    pub fn naive(&self) -> NaiveDateTime {
        self.0
    }

    pub fn plus_seconds(&self, secs: i64) -> Self {
        Timestamp(self.0 + chrono::Duration::seconds(secs))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_iso())
    }
}

/// Attribute payload. Numbers keep their lexical scale (`2.0` stays `2.0`)
/// but compare numerically.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AttributeValue {
    Text(String),
    Number(Decimal),
    Term(QualifiedName),
    Uri(String),
}

impl AttributeValue {
    pub fn kind_name(&self) -> &'static str {
        match self {
            AttributeValue::Text(_) => "text",
            AttributeValue::Number(_) => "number",
            AttributeValue::Term(_) => "term",
            AttributeValue::Uri(_) => "uri",
        }
    }

    /// Canonical text of the value, as written inside quotes or elements.
    pub fn lexical(&self) -> String {
        match self {
            AttributeValue::Text(s) | AttributeValue::Uri(s) => s.clone(),
            AttributeValue::Number(d) => d.to_string(),
            AttributeValue::Term(q) => q.to_string(),
        }
    }

    pub fn as_number(&self) -> Option<Decimal> {
        match self {
            AttributeValue::Number(d) => Some(*d),
            AttributeValue::Text(s) => parse_decimal(s),
            _ => None,
        }
    }

    pub fn as_term(&self) -> Option<&QualifiedName> {
        match self {
            AttributeValue::Term(q) => Some(q),
            _ => None,
        }
    }

    /// Value equality used by queries: numbers equal their canonical text.
    pub fn loosely_equals(&self, other: &AttributeValue) -> bool {
        use AttributeValue::*;
        match (self, other) {
            (Number(a), Number(b)) => a == b,
            (Number(a), Text(t)) | (Text(t), Number(a)) => parse_decimal(t) == Some(*a),
            (Term(a), Term(b)) => a == b,
            (Text(a) | Uri(a), Text(b) | Uri(b)) => a == b,
            _ => false,
        }
    }

    /// Classifies an untyped literal the way the SPM tool's `xsd:string`
    /// payloads are read: URI, then decimal, then plain text.
    pub fn sniff(text: &str) -> AttributeValue {
        if looks_like_uri(text) {
            AttributeValue::Uri(text.to_string())
        } else if let Some(d) = parse_decimal(text) {
            AttributeValue::Number(d)
        } else {
            AttributeValue::Text(text.to_string())
        }
    }
}

/// Strict decimal syntax: optional sign, digits, optional fraction.
pub fn parse_decimal(text: &str) -> Option<Decimal> {
    let body = text.strip_prefix('-').unwrap_or(text);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if let Some(f) = frac {
        if f.is_empty() || !f.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
    }
    Decimal::from_str_exact(text).ok()
}

/// `scheme://...` with no whitespace.
pub fn looks_like_uri(text: &str) -> bool {
    let Some((scheme, rest)) = text.split_once("://") else {
        return false;
    };
    let mut chars = scheme.chars();
    let scheme_ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'));
    scheme_ok && !rest.is_empty() && !text.chars().any(|c| c.is_whitespace() || c == '"' || c == '\'')
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Attribute {
    pub key: QualifiedName,
    pub value: AttributeValue,
}

impl Attribute {
    pub fn new(key: QualifiedName, value: AttributeValue) -> Self {
        Attribute { key, value }
    }

    pub fn prov_type(term: QualifiedName) -> Self {
        Attribute::new(QualifiedName::prov("type"), AttributeValue::Term(term))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entity {
    pub id: String,
    pub attributes: Vec<Attribute>,
}

impl Entity {
    pub fn new(id: impl Into<String>, attributes: Vec<Attribute>) -> Self {
        Entity {
            id: id.into(),
            attributes,
        }
    }

    pub fn is_collection(&self) -> bool {
        let collection = QualifiedName::prov("Collection");
        types_of(&self.attributes).any(|t| *t == collection)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Activity {
    pub id: String,
    pub start: Option<Timestamp>,
    pub end: Option<Timestamp>,
    pub attributes: Vec<Attribute>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Agent {
    pub id: String,
    pub attributes: Vec<Attribute>,
}

impl Agent {
    pub fn new(id: impl Into<String>, attributes: Vec<Attribute>) -> Self {
        Agent {
            id: id.into(),
            attributes,
        }
    }
}

/// Which of the three core structures a record is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Entity,
    Activity,
    Agent,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Entity => "entity",
            Category::Activity => "activity",
            Category::Agent => "agent",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "entity" => Some(Category::Entity),
            "activity" => Some(Category::Activity),
            "agent" => Some(Category::Agent),
            _ => None,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelationKind {
    Used,
    WasGeneratedBy,
    WasDerivedFrom,
    WasInformedBy,
    WasAssociatedWith,
    ActedOnBehalfOf,
    WasAttributedTo,
    HadMember,
}

impl RelationKind {
    pub const ALL: [RelationKind; 8] = [
        RelationKind::Used,
        RelationKind::WasGeneratedBy,
        RelationKind::WasDerivedFrom,
        RelationKind::WasInformedBy,
        RelationKind::WasAssociatedWith,
        RelationKind::ActedOnBehalfOf,
        RelationKind::WasAttributedTo,
        RelationKind::HadMember,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RelationKind::Used => "used",
            RelationKind::WasGeneratedBy => "wasGeneratedBy",
            RelationKind::WasDerivedFrom => "wasDerivedFrom",
            RelationKind::WasInformedBy => "wasInformedBy",
            RelationKind::WasAssociatedWith => "wasAssociatedWith",
            RelationKind::ActedOnBehalfOf => "actedOnBehalfOf",
            RelationKind::WasAttributedTo => "wasAttributedTo",
            RelationKind::HadMember => "hadMember",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        RelationKind::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Expected categories of (subject, object).
    pub fn endpoints(self) -> (Category, Category) {
        use Category::*;
        match self {
            RelationKind::Used => (Activity, Entity),
            RelationKind::WasGeneratedBy => (Entity, Activity),
            RelationKind::WasDerivedFrom => (Entity, Entity),
            RelationKind::WasInformedBy => (Activity, Activity),
            RelationKind::WasAssociatedWith => (Activity, Agent),
            RelationKind::ActedOnBehalfOf => (Agent, Agent),
            RelationKind::WasAttributedTo => (Entity, Agent),
            RelationKind::HadMember => (Entity, Entity),
        }
    }

    /// Element names of the subject and object references in PROV-XML.
    pub fn role_names(self) -> (&'static str, &'static str) {
        match self {
            RelationKind::Used => ("activity", "entity"),
            RelationKind::WasGeneratedBy => ("entity", "activity"),
            RelationKind::WasDerivedFrom => ("generatedEntity", "usedEntity"),
            RelationKind::WasInformedBy => ("informed", "informant"),
            RelationKind::WasAssociatedWith => ("activity", "agent"),
            RelationKind::ActedOnBehalfOf => ("delegate", "responsible"),
            RelationKind::WasAttributedTo => ("entity", "agent"),
            RelationKind::HadMember => ("collection", "entity"),
        }
    }

    pub fn allows_time(self) -> bool {
        matches!(self, RelationKind::Used | RelationKind::WasGeneratedBy)
    }

    pub fn allows_plan(self) -> bool {
        self == RelationKind::WasAssociatedWith
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A binary relation between records. The optional `id` is carried through
/// codecs but takes no part in identity; two relations are the same relation
/// only when every field matches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    pub kind: RelationKind,
    pub id: Option<String>,
    pub subject: String,
    pub object: String,
    pub plan: Option<String>,
    pub time: Option<Timestamp>,
    pub attributes: Vec<Attribute>,
}

impl Relation {
    pub fn new(kind: RelationKind, subject: impl Into<String>, object: impl Into<String>) -> Self {
        Relation {
            kind,
            id: None,
            subject: subject.into(),
            object: object.into(),
            plan: None,
            time: None,
            attributes: Vec::new(),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn with_time(mut self, time: Timestamp) -> Self {
        self.time = Some(time);
        self
    }

    pub fn with_plan(mut self, plan: impl Into<String>) -> Self {
        self.plan = Some(plan.into());
        self
    }

    pub fn with_attributes(mut self, attributes: Vec<Attribute>) -> Self {
        self.attributes = attributes;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Record {
    Entity(Entity),
    Activity(Activity),
    Agent(Agent),
    Relation(Relation),
}

impl Record {
    /// Identifier of an entity, activity or agent; relations have none.
    pub fn id(&self) -> Option<&str> {
        match self {
            Record::Entity(e) => Some(&e.id),
            Record::Activity(a) => Some(&a.id),
            Record::Agent(a) => Some(&a.id),
            Record::Relation(_) => None,
        }
    }

    pub fn category(&self) -> Option<Category> {
        match self {
            Record::Entity(_) => Some(Category::Entity),
            Record::Activity(_) => Some(Category::Activity),
            Record::Agent(_) => Some(Category::Agent),
            Record::Relation(_) => None,
        }
    }

    pub fn attributes(&self) -> &[Attribute] {
        match self {
            Record::Entity(e) => &e.attributes,
            Record::Activity(a) => &a.attributes,
            Record::Agent(a) => &a.attributes,
            Record::Relation(r) => &r.attributes,
        }
    }

    pub fn attributes_mut(&mut self) -> &mut Vec<Attribute> {
        match self {
            Record::Entity(e) => &mut e.attributes,
            Record::Activity(a) => &mut a.attributes,
            Record::Agent(a) => &mut a.attributes,
            Record::Relation(r) => &mut r.attributes,
        }
    }

    /// Values of every `prov:type` attribute that holds a term.
    pub fn types(&self) -> impl Iterator<Item = &QualifiedName> {
        types_of(self.attributes())
    }

    pub fn as_relation(&self) -> Option<&Relation> {
        match self {
            Record::Relation(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_entity(&self) -> Option<&Entity> {
        match self {
            Record::Entity(e) => Some(e),
            _ => None,
        }
    }

    /// Every qualified name used by the record, keys and term values alike.
    pub fn qualified_names(&self) -> impl Iterator<Item = &QualifiedName> {
        self.attributes().iter().flat_map(|a| {
            std::iter::once(&a.key).chain(a.value.as_term())
        })
    }
}

fn types_of(attributes: &[Attribute]) -> impl Iterator<Item = &QualifiedName> {
    attributes.iter().filter_map(|a| {
        if a.key.prefix() == PROV_PREFIX && a.key.local() == "type" {
            a.value.as_term()
        } else {
            None
        }
    })
}

/// A namespace context plus an ordered list of records.
///
/// Documents are immutable once built. The `prov` prefix is always in scope
/// and never stored in the namespace map.
#[derive(Clone, Debug, Default)]
pub struct Document {
    namespaces: BTreeMap<String, String>,
    records: Vec<Record>,
    by_id: HashMap<String, usize>,
}

impl PartialEq for Document {
    fn eq(&self, other: &Self) -> bool {
        self.namespaces == other.namespaces && self.records == other.records
    }
}

impl Eq for Document {}

impl Document {
    /// Assembles a document without validating references. Fails only when
    /// two entities/activities/agents share an id.
    pub fn new(namespaces: BTreeMap<String, String>, records: Vec<Record>) -> Result<Self> {
        let mut namespaces = namespaces;
        namespaces.remove(PROV_PREFIX);
        let mut by_id = HashMap::new();
        for (i, record) in records.iter().enumerate() {
            if let Some(id) = record.id() {
                if by_id.insert(id.to_string(), i).is_some() {
                    return Err(NidmError::DuplicateId(id.to_string()));
                }
            }
        }
        Ok(Document {
            namespaces,
            records,
            by_id,
        })
    }

    pub fn empty() -> Self {
        Document::default()
    }

    pub fn namespaces(&self) -> &BTreeMap<String, String> {
        &self.namespaces
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn into_parts(self) -> (BTreeMap<String, String>, Vec<Record>) {
        (self.namespaces, self.records)
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// True when `prefix` resolves, either declared or the implicit `prov`.
    pub fn declares(&self, prefix: &str) -> bool {
        prefix == PROV_PREFIX || self.namespaces.contains_key(prefix)
    }

    pub fn get(&self, id: &str) -> Option<&Record> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.records.iter().filter_map(|r| match r {
            Record::Entity(e) => Some(e),
            _ => None,
        })
    }

    pub fn activities(&self) -> impl Iterator<Item = &Activity> {
        self.records.iter().filter_map(|r| match r {
            Record::Activity(a) => Some(a),
            _ => None,
        })
    }

    pub fn agents(&self) -> impl Iterator<Item = &Agent> {
        self.records.iter().filter_map(|r| match r {
            Record::Agent(a) => Some(a),
            _ => None,
        })
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.records.iter().filter_map(Record::as_relation)
    }

    /// A document holding a single record with this document's namespaces.
    pub fn single(&self, record: Record) -> Document {
        Document::new(self.namespaces.clone(), vec![record]).expect("one record has unique ids")
    }
}

/// Mirrors `Document::new`; kept as a free function for callers that think in
/// terms of operations rather than constructors.
pub fn build_document(namespaces: BTreeMap<String, String>, records: Vec<Record>) -> Result<Document> {
    Document::new(namespaces, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ns(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(p, u)| (p.to_string(), u.to_string())).collect()
    }

    fn q(s: &str) -> QualifiedName {
        s.parse().unwrap()
    }

    #[test]
    fn builds_plan_entity() {
        let attrs = vec![
            Attribute::prov_type(q("prov:Plan")),
            Attribute::prov_type(q("neurolex:Handedness_Form")),
            Attribute::prov_type(q("hid:Edinburgh_Handedness")),
            Attribute::new(q("prov:label"), AttributeValue::Text("Subject Handedness Form".into())),
            Attribute::new(q("nidm:url"), AttributeValue::Uri("http://myform.com/Edinburgh.pdf".into())),
        ];
        let doc = build_document(
            ns(&[("prov", PROV_NS), ("nidm", NIDM_NS)]),
            vec![Record::Entity(Entity::new("plan_1", attrs))],
        )
        .unwrap();
        assert_eq!(doc.len(), 1);
        assert_eq!(doc.records()[0].attributes().len(), 5);
        // prov is implicit and never stored
        assert!(!doc.namespaces().contains_key("prov"));
        assert!(doc.declares("prov"));
    }

    #[test]
    fn empty_document() {
        let doc = build_document(BTreeMap::new(), vec![]).unwrap();
        assert!(doc.is_empty());
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = build_document(
            ns(&[("prov", PROV_NS)]),
            vec![
                Record::Entity(Entity::new("e_1", vec![])),
                Record::Entity(Entity::new("e_1", vec![])),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, NidmError::DuplicateId(ref id) if id == "e_1"));
    }

    #[test]
    fn qualified_name_rules() {
        assert!(QualifiedName::new("hid", "spgr").is_ok());
        assert!(QualifiedName::new("", "x").is_err());
        assert!(QualifiedName::new("a", "").is_err());
        assert!(QualifiedName::new("a b", "x").is_err());
        assert!(QualifiedName::new("a", "x:y").is_err());
        assert!(QualifiedName::new("a", "it's").is_err());
        assert!("nocolon".parse::<QualifiedName>().is_err());
        assert_eq!(q("neurolex:T1").to_string(), "neurolex:T1");
    }

    #[test]
    fn timestamp_forms() {
        let iso = Timestamp::parse("2012-06-07T14:06:39").unwrap();
        let spm = Timestamp::parse("07-Jun-2012 14:06:39").unwrap();
        let ctime = Timestamp::parse("Thu Jun  7 14:06:39 UTC 2012").unwrap();
        assert_eq!(iso, spm);
        assert_eq!(iso, ctime);
        assert_eq!(spm.to_spm(), "07-Jun-2012 14:06:39");
        assert_eq!(spm.to_iso(), "2012-06-07T14:06:39");
        assert!(Timestamp::parse("yesterday").is_none());
    }

    #[test]
    fn numbers_compare_numerically_and_keep_scale() {
        let a = AttributeValue::Number(parse_decimal("2.0").unwrap());
        let b = AttributeValue::Number(parse_decimal("2").unwrap());
        assert_eq!(a, b);
        assert_eq!(a.lexical(), "2.0");
        assert!(a.loosely_equals(&AttributeValue::Text("2".into())));
        assert!(parse_decimal("1e5").is_none());
        assert!(parse_decimal(".5").is_none());
    }

    #[test]
    fn uri_sniffing() {
        assert!(looks_like_uri("http://fbirnbdn.nbirn.net/T1.nii.gz"));
        assert!(!looks_like_uri("neurolex:right_handed"));
        assert!(!looks_like_uri("par: tr"));
        assert_eq!(AttributeValue::sniff("2"), AttributeValue::Number(2.into()));
    }
}
