use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use super::{ParseError, SourceSpan};
use crate::error::{NidmError, Result};
use crate::model::{
    parse_decimal, Activity, Agent, Attribute, AttributeValue, Document, Entity, QualifiedName, Record, Relation,
    RelationKind, Timestamp,
};

fn attributes_json(attrs: &[Attribute]) -> Value {
    Value::Array(
        attrs
            .iter()
            .map(|a| {
                json!({
                    "key": a.key.to_string(),
                    "valueKind": a.value.kind_name(),
                    "value": a.value.lexical(),
                })
            })
            .collect(),
    )
}

fn category_rank(r: &Record) -> u8 {
    match r {
        Record::Entity(_) => 0,
        Record::Activity(_) => 1,
        Record::Agent(_) => 2,
        Record::Relation(_) => 3,
    }
}

fn record_json(record: &Record) -> Value {
    let mut obj = Map::new();
    match record {
        Record::Entity(Entity { id, attributes }) | Record::Agent(Agent { id, attributes }) => {
            obj.insert("id".into(), json!(id));
            obj.insert("attributes".into(), attributes_json(attributes));
        }
        Record::Activity(a) => {
            obj.insert("id".into(), json!(a.id));
            if let Some(t) = a.start {
                obj.insert("startTime".into(), json!(t.to_iso()));
            }
            if let Some(t) = a.end {
                obj.insert("endTime".into(), json!(t.to_iso()));
            }
            obj.insert("attributes".into(), attributes_json(&a.attributes));
        }
        Record::Relation(r) => {
            obj.insert("kind".into(), json!(r.kind.name()));
            if let Some(id) = &r.id {
                obj.insert("id".into(), json!(id));
            }
            obj.insert("subject".into(), json!(r.subject));
            obj.insert("object".into(), json!(r.object));
            if let Some(plan) = &r.plan {
                obj.insert("plan".into(), json!(plan));
            }
            if let Some(t) = r.time {
                obj.insert("time".into(), json!(t.to_iso()));
            }
            obj.insert("attributes".into(), attributes_json(&r.attributes));
        }
    }
    Value::Object(obj)
}

/// The JSON mapping as a value tree, for embedding in larger responses.
///
/// Records are grouped by category. When the document interleaves
/// categories, every record also carries its position as `seq` so the
/// original order can be restored.
pub fn document_to_json_value(doc: &Document) -> Value {
    let grouped = doc
        .records()
        .windows(2)
        .all(|w| category_rank(&w[0]) <= category_rank(&w[1]));
    let mut groups: [Vec<Value>; 4] = Default::default();
    for (seq, record) in doc.records().iter().enumerate() {
        let mut value = record_json(record);
        if !grouped {
            value.as_object_mut().expect("record is an object").insert("seq".into(), json!(seq));
        }
        groups[category_rank(record) as usize].push(value);
    }
    let [entities, activities, agents, relations] = groups;
    let namespaces: Map<String, Value> = doc.namespaces().iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    json!({
        "namespaces": namespaces,
        "entities": entities,
        "activities": activities,
        "agents": agents,
        "relations": relations,
    })
}

pub fn serialize_json(doc: &Document) -> String {
    document_to_json_value(doc).to_string()
}

fn schema_error(pointer: &str, expected: &str, found: &Value) -> NidmError {
    let found = match found {
        Value::Null => "null".to_string(),
        Value::String(s) => format!("\"{s}\""),
        other => {
            let mut s = other.to_string();
            if s.len() > 40 {
                s.truncate(40);
                s.push('…');
            }
            s
        }
    };
    ParseError::new(SourceSpan::new(1, 1, 0), expected, found)
        .at_path(if pointer.is_empty() { "/" } else { pointer })
        .into()
}

struct Decoder<'a> {
    namespaces: &'a BTreeMap<String, String>,
}

impl Decoder<'_> {
    fn field<'v>(&self, obj: &'v Map<String, Value>, key: &str, pointer: &str) -> Result<&'v Value> {
        obj.get(key)
            .ok_or_else(|| schema_error(&format!("{pointer}/{key}"), &format!("member \"{key}\""), &Value::Null))
    }

    fn string(&self, obj: &Map<String, Value>, key: &str, pointer: &str) -> Result<String> {
        let v = self.field(obj, key, pointer)?;
        v.as_str()
            .map(str::to_string)
            .ok_or_else(|| schema_error(&format!("{pointer}/{key}"), "a string", v))
    }

    fn optional_string(&self, obj: &Map<String, Value>, key: &str, pointer: &str) -> Result<Option<String>> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(other) => Err(schema_error(&format!("{pointer}/{key}"), "a string", other)),
        }
    }

    fn optional_time(&self, obj: &Map<String, Value>, key: &str, pointer: &str) -> Result<Option<Timestamp>> {
        match self.optional_string(obj, key, pointer)? {
            None => Ok(None),
            Some(s) => Timestamp::parse(&s)
                .map(Some)
                .ok_or_else(|| schema_error(&format!("{pointer}/{key}"), "a timestamp", &Value::String(s))),
        }
    }

    fn qname(&self, text: &str, pointer: &str) -> Result<QualifiedName> {
        let q: QualifiedName = text
            .parse()
            .map_err(|_| schema_error(pointer, "a qualified name", &Value::String(text.into())))?;
        if q.prefix() != crate::model::PROV_PREFIX && !self.namespaces.contains_key(q.prefix()) {
            return Err(NidmError::UndeclaredPrefix {
                prefix: q.prefix().to_string(),
                line: 1,
                column: 1,
            });
        }
        Ok(q)
    }

    fn object<'v>(&self, v: &'v Value, pointer: &str) -> Result<&'v Map<String, Value>> {
        v.as_object().ok_or_else(|| schema_error(pointer, "an object", v))
    }

    fn attributes(&self, obj: &Map<String, Value>, pointer: &str) -> Result<Vec<Attribute>> {
        let pointer = format!("{pointer}/attributes");
        let list = match obj.get("attributes") {
            None => return Ok(Vec::new()),
            Some(Value::Array(list)) => list,
            Some(other) => return Err(schema_error(&pointer, "an array", other)),
        };
        list.iter()
            .enumerate()
            .map(|(i, item)| {
                let p = format!("{pointer}/{i}");
                let a = self.object(item, &p)?;
                let key = self.qname(&self.string(a, "key", &p)?, &format!("{p}/key"))?;
                let kind = self.string(a, "valueKind", &p)?;
                let raw = self.string(a, "value", &p)?;
                let value = match kind.as_str() {
                    "text" => AttributeValue::Text(raw),
                    "uri" => AttributeValue::Uri(raw),
                    "term" => AttributeValue::Term(self.qname(&raw, &format!("{p}/value"))?),
                    "number" => AttributeValue::Number(
                        parse_decimal(&raw).ok_or_else(|| schema_error(&format!("{p}/value"), "a decimal", &Value::String(raw.clone())))?,
                    ),
                    _ => {
                        return Err(schema_error(
                            &format!("{p}/valueKind"),
                            "one of text, number, term, uri",
                            &Value::String(kind),
                        ))
                    }
                };
                Ok(Attribute::new(key, value))
            })
            .collect()
    }

    fn record(&self, group: &str, v: &Value, pointer: &str) -> Result<Record> {
        let obj = self.object(v, pointer)?;
        Ok(match group {
            "entities" => Record::Entity(Entity {
                id: self.string(obj, "id", pointer)?,
                attributes: self.attributes(obj, pointer)?,
            }),
            "agents" => Record::Agent(Agent {
                id: self.string(obj, "id", pointer)?,
                attributes: self.attributes(obj, pointer)?,
            }),
            "activities" => Record::Activity(Activity {
                id: self.string(obj, "id", pointer)?,
                start: self.optional_time(obj, "startTime", pointer)?,
                end: self.optional_time(obj, "endTime", pointer)?,
                attributes: self.attributes(obj, pointer)?,
            }),
            _ => {
                let kind_name = self.string(obj, "kind", pointer)?;
                let kind = RelationKind::from_name(&kind_name).ok_or_else(|| {
                    schema_error(&format!("{pointer}/kind"), "a relation kind", &Value::String(kind_name.clone()))
                })?;
                Record::Relation(Relation {
                    kind,
                    id: self.optional_string(obj, "id", pointer)?,
                    subject: self.string(obj, "subject", pointer)?,
                    object: self.string(obj, "object", pointer)?,
                    plan: self.optional_string(obj, "plan", pointer)?,
                    time: self.optional_time(obj, "time", pointer)?,
                    attributes: self.attributes(obj, pointer)?,
                })
            }
        })
    }
}

pub fn document_from_json_value(value: &Value) -> Result<Document> {
    let root = value.as_object().ok_or_else(|| schema_error("", "an object", value))?;
    let mut namespaces = BTreeMap::new();
    match root.get("namespaces") {
        None => {}
        Some(Value::Object(map)) => {
            for (prefix, uri) in map {
                let uri = uri
                    .as_str()
                    .ok_or_else(|| schema_error(&format!("/namespaces/{prefix}"), "a string", uri))?;
                namespaces.insert(prefix.clone(), uri.to_string());
            }
        }
        Some(other) => return Err(schema_error("/namespaces", "an object", other)),
    }
    let decoder = Decoder {
        namespaces: &namespaces,
    };
    let mut keyed: Vec<(Option<u64>, usize, Record)> = Vec::new();
    for group in ["entities", "activities", "agents", "relations"] {
        let list = match root.get(group) {
            None => continue,
            Some(Value::Array(list)) => list,
            Some(other) => return Err(schema_error(&format!("/{group}"), "an array", other)),
        };
        for (i, item) in list.iter().enumerate() {
            let pointer = format!("/{group}/{i}");
            let record = decoder.record(group, item, &pointer)?;
            let seq = match item.get("seq") {
                None => None,
                Some(v) => Some(v.as_u64().ok_or_else(|| schema_error(&format!("{pointer}/seq"), "an integer", v))?),
            };
            keyed.push((seq, keyed.len(), record));
        }
    }
    if keyed.iter().any(|(seq, _, _)| seq.is_some()) {
        keyed.sort_by_key(|(seq, pos, _)| (seq.unwrap_or(u64::MAX), *pos));
    }
    Document::new(namespaces, keyed.into_iter().map(|(_, _, r)| r).collect())
}

pub fn parse_json(text: &str) -> Result<Document> {
    let value: Value = serde_json::from_str(text).map_err(|e| {
        NidmError::from(ParseError::new(
            SourceSpan::new(e.line(), e.column(), 0),
            "valid JSON",
            e.to_string(),
        ))
    })?;
    document_from_json_value(&value)
}
