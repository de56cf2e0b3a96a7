//! Log files to provenance documents.

use std::collections::{BTreeMap, HashMap};

use crate::model::{
    Activity, Attribute, AttributeValue, Document, Entity, QualifiedName, Record, Relation, RelationKind, Timestamp,
    NIDM_NS, NIDM_PREFIX,
};

mod replay;
mod rules;
mod spm;

pub use replay::{regenerate_log, replay_plan, PlanStep};
pub use rules::{extract_with_rules, EmitKind, ExtractionOutcome, ExtractionRule, RuleSet};
pub use spm::extract_spm_batch;

/// Shared record emitter: id counters, file entities shared by path, and the
/// currently open activity.
struct Builder {
    namespaces: BTreeMap<String, String>,
    records: Vec<Record>,
    next: HashMap<char, u64>,
    files: HashMap<String, String>,
    open: Option<usize>,
    pending_outputs: Vec<String>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            namespaces: BTreeMap::new(),
            records: Vec::new(),
            next: HashMap::new(),
            files: HashMap::new(),
            open: None,
            pending_outputs: Vec::new(),
        }
    }

    fn set_counter(&mut self, prefix: char, start: u64) {
        self.next.insert(prefix, start);
    }

    fn fresh(&mut self, prefix: char) -> String {
        let n = self.next.entry(prefix).or_insert(1);
        let id = format!("{prefix}_{n}");
        *n += 1;
        id
    }

    fn open_activity(&mut self, start: Option<Timestamp>, attributes: Vec<Attribute>) {
        let id = self.fresh('a');
        self.records.push(Record::Activity(Activity {
            id,
            start,
            end: None,
            attributes,
        }));
        self.open = Some(self.records.len() - 1);
    }

    fn open_id(&self) -> Option<String> {
        self.open.and_then(|i| self.records[i].id().map(str::to_string))
    }

    fn open_start(&self) -> Option<Timestamp> {
        match self.open.map(|i| &self.records[i]) {
            Some(Record::Activity(a)) => a.start,
            _ => None,
        }
    }

    /// Ends the open activity; outputs gathered since it began get their
    /// wasGeneratedBy relations stamped with the end time.
    fn close_activity(&mut self, end: Option<Timestamp>) {
        let Some(i) = self.open.take() else {
            return;
        };
        let act_id = self.records[i].id().unwrap().to_string();
        if let Record::Activity(a) = &mut self.records[i] {
            a.end = end;
        }
        for entity in std::mem::take(&mut self.pending_outputs) {
            let mut rel = Relation::new(RelationKind::WasGeneratedBy, entity, act_id.clone()).with_id(self.fresh('g'));
            rel.time = end;
            self.records.push(Record::Relation(rel));
        }
    }

    fn nidm(&mut self) {
        self.namespaces.insert(NIDM_PREFIX.to_string(), NIDM_NS.to_string());
    }

    fn parameter(&mut self, name: &str, value: &str, extra_types: Vec<Attribute>) {
        self.nidm();
        let id = self.fresh('e');
        let mut attributes = vec![Attribute::new(QualifiedName::prov("type"), AttributeValue::Text("parameter".into()))];
        attributes.extend(extra_types);
        attributes.push(Attribute::new(nidm("name"), AttributeValue::Text(format!("par: {name}"))));
        attributes.push(Attribute::new(nidm("value"), AttributeValue::sniff(value)));
        self.records.push(Record::Entity(Entity::new(id.clone(), attributes)));
        self.use_entity(id);
    }

    fn use_entity(&mut self, entity: String) {
        if let Some(act) = self.open_id() {
            let rel = Relation::new(RelationKind::Used, act, entity).with_id(self.fresh('u'));
            self.records.push(Record::Relation(rel));
        }
    }

    fn file(&mut self, path: &str, extra_types: Vec<Attribute>) -> String {
        if let Some(id) = self.files.get(path) {
            return id.clone();
        }
        let id = self.fresh('e');
        let mut attributes = vec![Attribute::new(QualifiedName::prov("type"), AttributeValue::Text("file".into()))];
        attributes.extend(extra_types);
        attributes.push(Attribute::new(QualifiedName::prov("location"), AttributeValue::Text(path.to_string())));
        self.records.push(Record::Entity(Entity::new(id.clone(), attributes)));
        self.files.insert(path.to_string(), id.clone());
        id
    }

    fn input(&mut self, path: &str, extra_types: Vec<Attribute>) {
        let id = self.file(path, extra_types);
        self.use_entity(id);
    }

    fn output(&mut self, path: &str, extra_types: Vec<Attribute>) {
        let id = self.file(path, extra_types);
        if self.open.is_some() && !self.pending_outputs.contains(&id) {
            self.pending_outputs.push(id);
        }
    }

    fn finish(self) -> Document {
        let mut namespaces = self.namespaces;
        if self.records.is_empty() {
            namespaces.clear();
        }
        Document::new(namespaces, self.records).expect("generated ids are unique")
    }
}

fn nidm(local: &str) -> QualifiedName {
    QualifiedName::new(NIDM_PREFIX, local).expect("valid local name")
}
