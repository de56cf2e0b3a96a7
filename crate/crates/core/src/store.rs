//! In-memory store of harmonized documents keyed by source tag.
//!
//! Readers take a snapshot (`Arc<Snapshot>`) and never see a source half
//! replaced; ingest builds the new per-source index first and then swaps the
//! snapshot pointer.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

use crate::error::{NidmError, Result};
use crate::model::{Category, Document, QualifiedName, Record, RelationKind};
use crate::query::{Direction, PathConstraint, Query, RecordFilter, ResultRow, ResultSet, DEFAULT_MAX_PATH, DEFAULT_MAX_ROWS};
use crate::terminology::{harmonize, Registry};
use crate::validate::validate;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QueryLimits {
    pub max_path: usize,
    pub max_rows: usize,
}

impl Default for QueryLimits {
    fn default() -> Self {
        QueryLimits {
            max_path: DEFAULT_MAX_PATH,
            max_rows: DEFAULT_MAX_ROWS,
        }
    }
}

/// Counts reported by `ingest`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub source: String,
    pub records: usize,
    pub entities: usize,
    pub plans: usize,
    pub collections: usize,
    /// Entities that are neither plans nor collections.
    pub values: usize,
    pub activities: usize,
    pub agents: usize,
    pub relations: usize,
}

impl IngestSummary {
    fn of(source: &str, doc: &Document) -> Self {
        let plan = QualifiedName::prov("Plan");
        let mut s = IngestSummary {
            source: source.to_string(),
            records: doc.len(),
            ..Default::default()
        };
        for record in doc.records() {
            match record {
                Record::Entity(e) => {
                    s.entities += 1;
                    if e.is_collection() {
                        s.collections += 1;
                    } else if record.types().any(|t| *t == plan) {
                        s.plans += 1;
                    } else {
                        s.values += 1;
                    }
                }
                Record::Activity(_) => s.activities += 1,
                Record::Agent(_) => s.agents += 1,
                Record::Relation(_) => s.relations += 1,
            }
        }
        s
    }
}

/// One ingested document with its lookup tables.
#[derive(Debug)]
pub struct SourceData {
    doc: Document,
    /// canonical type -> record indexes
    by_type: HashMap<QualifiedName, Vec<usize>>,
    /// (kind, subject) -> objects
    outgoing: HashMap<(RelationKind, String), Vec<String>>,
    /// (kind, object) -> subjects
    incoming: HashMap<(RelationKind, String), Vec<String>>,
}

impl SourceData {
    fn build(doc: Document, reg: &Registry) -> Self {
        let mut by_type: HashMap<QualifiedName, Vec<usize>> = HashMap::new();
        let mut outgoing: HashMap<(RelationKind, String), Vec<String>> = HashMap::new();
        let mut incoming: HashMap<(RelationKind, String), Vec<String>> = HashMap::new();
        for (i, record) in doc.records().iter().enumerate() {
            if let Record::Relation(rel) = record {
                outgoing.entry((rel.kind, rel.subject.clone())).or_default().push(rel.object.clone());
                incoming.entry((rel.kind, rel.object.clone())).or_default().push(rel.subject.clone());
                continue;
            }
            let canon: BTreeSet<QualifiedName> = record.types().map(|t| reg.resolve(t)).collect();
            for t in canon {
                by_type.entry(t).or_default().push(i);
            }
        }
        SourceData {
            doc,
            by_type,
            outgoing,
            incoming,
        }
    }

    pub fn document(&self) -> &Document {
        &self.doc
    }

    /// Ids reached from `id` by one step.
    fn step(&self, kind: RelationKind, direction: Direction, id: &str) -> &[String] {
        let map = if direction.subject_to_object(kind) {
            &self.outgoing
        } else {
            &self.incoming
        };
        map.get(&(kind, id.to_string())).map_or(&[], Vec::as_slice)
    }

    fn satisfies(&self, reg: &Registry, start: &str, path: &PathConstraint) -> bool {
        let mut frontier: BTreeSet<&str> = BTreeSet::from([start]);
        for step in &path.steps {
            let mut next = BTreeSet::new();
            for id in &frontier {
                for reached in self.step(step.kind, step.direction, id) {
                    let Some(record) = self.doc.get(reached) else {
                        continue;
                    };
                    if step.filter.matches(reg, record) {
                        next.insert(reached.as_str());
                    }
                }
            }
            if next.is_empty() {
                return false;
            }
            frontier = next;
        }
        frontier
            .iter()
            .any(|id| self.doc.get(id).is_some_and(|r| path.target.matches(reg, r)))
    }

    fn candidates(&self, reg: &Registry, q: &Query) -> Vec<usize> {
        match q.types.first() {
            Some(t) => self.by_type.get(&reg.resolve(t)).cloned().unwrap_or_default(),
            None => (0..self.doc.len()).collect(),
        }
    }
}

/// Immutable view of every source at one point in time.
#[derive(Debug, Default)]
pub struct Snapshot {
    sources: BTreeMap<String, Arc<SourceData>>,
}

impl Snapshot {
    pub fn sources(&self) -> impl Iterator<Item = (&str, &Document)> {
        self.sources.iter().map(|(k, v)| (k.as_str(), &v.doc))
    }

    pub fn source(&self, tag: &str) -> Option<&Document> {
        self.sources.get(tag).map(|s| &s.doc)
    }

    /// Every (source, record) with this id, optionally limited to one source.
    pub fn lookup(&self, source: Option<&str>, id: &str) -> Vec<(&str, &Record)> {
        self.sources
            .iter()
            .filter(|(tag, _)| source.is_none_or(|s| s == tag.as_str()))
            .filter_map(|(tag, data)| data.doc.get(id).map(|r| (tag.as_str(), r)))
            .collect()
    }
}

pub struct Store {
    registry: Arc<Registry>,
    limits: QueryLimits,
    current: RwLock<Arc<Snapshot>>,
    writer: Mutex<()>,
}

impl Store {
    pub fn new(registry: Arc<Registry>) -> Self {
        Store::with_limits(registry, QueryLimits::default())
    }

    pub fn with_limits(registry: Arc<Registry>, limits: QueryLimits) -> Self {
        Store {
            registry,
            limits,
            current: RwLock::new(Arc::new(Snapshot::default())),
            writer: Mutex::new(()),
        }
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn limits(&self) -> QueryLimits {
        self.limits
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().clone()
    }

    /// Validates, harmonizes and stores `doc` under `source`, replacing any
    /// document previously stored under that tag.
    pub fn ingest(&self, source: &str, doc: &Document) -> Result<IngestSummary> {
        let report = validate(doc);
        if !report.is_valid() {
            return Err(NidmError::InvalidDocument(report));
        }
        let harmonized = harmonize(&self.registry, doc);
        let summary = IngestSummary::of(source, &harmonized);
        let data = Arc::new(SourceData::build(harmonized, &self.registry));

        let _guard = self.writer.lock();
        let mut sources = self.current.read().sources.clone();
        sources.insert(source.to_string(), data);
        *self.current.write() = Arc::new(Snapshot { sources });
        Ok(summary)
    }

    pub fn remove(&self, source: &str) -> bool {
        let _guard = self.writer.lock();
        let mut sources = self.current.read().sources.clone();
        let removed = sources.remove(source).is_some();
        *self.current.write() = Arc::new(Snapshot { sources });
        removed
    }

    pub fn run_query(&self, q: &Query) -> Result<ResultSet> {
        run_query_on(&self.snapshot(), &self.registry, q, self.limits)
    }

    /// Members of every collection called `id` (in `source` when given).
    pub fn members(&self, source: Option<&str>, id: &str) -> Result<ResultSet> {
        members_on(&self.snapshot(), source, id, self.limits.max_rows)
    }
}

pub fn run_query_on(snapshot: &Snapshot, reg: &Registry, q: &Query, limits: QueryLimits) -> Result<ResultSet> {
    q.check(limits.max_path)?;
    let head: RecordFilter = q.head();
    let mut rows = Vec::new();
    for (tag, data) in &snapshot.sources {
        let mut hits: Vec<ResultRow> = data
            .candidates(reg, q)
            .into_iter()
            .filter_map(|i| {
                let record = &data.doc.records()[i];
                let id = record.id()?;
                let ok = head.matches(reg, record) && q.paths.iter().all(|p| data.satisfies(reg, id, p));
                ok.then(|| ResultRow {
                    source: tag.clone(),
                    id: id.to_string(),
                    record: record.clone(),
                })
            })
            .collect();
        hits.sort_by(|a, b| a.id.cmp(&b.id));
        rows.extend(hits);
    }
    Ok(truncate(rows, limits.max_rows))
}

fn truncate(mut rows: Vec<ResultRow>, cap: usize) -> ResultSet {
    let total = rows.len();
    rows.truncate(cap);
    ResultSet { rows, total }
}

pub fn members_on(snapshot: &Snapshot, source: Option<&str>, id: &str, cap: usize) -> Result<ResultSet> {
    let found = snapshot.lookup(source, id);
    if found.is_empty() {
        return Err(NidmError::UnknownId(id.to_string()));
    }
    let collections: Vec<&str> = found
        .iter()
        .filter(|(_, r)| r.as_entity().is_some_and(|e| e.is_collection()))
        .map(|(tag, _)| *tag)
        .collect();
    if collections.is_empty() {
        return Err(NidmError::NotACollection(id.to_string()));
    }
    let mut rows = Vec::new();
    for tag in collections {
        let data = &snapshot.sources[tag];
        let mut seen = BTreeSet::new();
        for member in data.step(RelationKind::HadMember, Direction::Forward, id) {
            if let Some(record) = data.doc.get(member) {
                if seen.insert(member.clone()) {
                    rows.push(ResultRow {
                        source: tag.to_string(),
                        id: member.clone(),
                        record: record.clone(),
                    });
                }
            }
        }
    }
    rows.sort_by(|a, b| (&a.source, &a.id).cmp(&(&b.source, &b.id)));
    Ok(truncate(rows, cap))
}

/// Records of one category across all sources, for listing endpoints.
pub fn list_records<'a>(snapshot: &'a Snapshot, category: Category) -> Vec<(&'a str, &'a Record)> {
    let mut out: Vec<(&str, &Record)> = snapshot
        .sources
        .iter()
        .flat_map(|(tag, data)| {
            data.doc
                .records()
                .iter()
                .filter(move |r| r.category() == Some(category))
                .map(move |r| (tag.as_str(), r))
        })
        .collect();
    out.sort_by(|a, b| (a.0, a.1.id()).cmp(&(b.0, b.1.id())));
    out
}
