//! Federated queries over several API endpoints.
//!
//! A federation file lists one endpoint per line:
//!
//! ```text
//! # tag  base url                deadline ms  overlay registry
//! endpoint hid  http://127.0.0.1:8101  2000  hid.terms
//! endpoint xnat http://127.0.0.1:8102
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::Value;

use nidm_core::codecs::document_from_json_value;
use nidm_core::model::{AttributeValue, Document, QualifiedName, Record};
use nidm_core::{harmonize, load_registry, Datatype, NidmError, Query, Registry};

pub const DEFAULT_DEADLINE: Duration = Duration::from_millis(5000);
/// Expanded type-filter combinations sent per endpoint before falling back
/// to the query as written.
pub const MAX_EXPANSIONS: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum MediatorError {
    #[error("no endpoints configured")]
    NoEndpoints,
    #[error("federation file line {line}: {message}")]
    Federation { line: usize, message: String },
    #[error("registry overlay for `{tag}`: {source}")]
    Overlay { tag: String, source: NidmError },
    #[error(transparent)]
    Query(#[from] NidmError),
}

#[derive(Clone, Debug)]
pub struct EndpointDescriptor {
    pub tag: String,
    pub base_url: String,
    pub deadline: Duration,
    pub overlay: Option<Arc<Registry>>,
}

impl EndpointDescriptor {
    pub fn new(tag: impl Into<String>, base_url: impl Into<String>) -> Self {
        EndpointDescriptor {
            tag: tag.into(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            deadline: DEFAULT_DEADLINE,
            overlay: None,
        }
    }

    pub fn with_deadline(mut self, deadline: Duration) -> Self {
        self.deadline = deadline;
        self
    }

    pub fn with_overlay(mut self, overlay: Registry) -> Self {
        self.overlay = Some(Arc::new(overlay));
        self
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base_url)
    }
}

/// Reads a federation file; overlay paths are relative to the file.
pub fn load_federation(path: impl AsRef<Path>) -> Result<Vec<EndpointDescriptor>, MediatorError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| MediatorError::Federation {
        line: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    parse_federation(&text, path.parent().unwrap_or(Path::new(".")))
}

pub fn parse_federation(text: &str, base_dir: &Path) -> Result<Vec<EndpointDescriptor>, MediatorError> {
    let mut out: Vec<EndpointDescriptor> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| MediatorError::Federation { line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields[0] != "endpoint" || !(3..=5).contains(&fields.len()) {
            return Err(err("expected `endpoint <tag> <url> [deadlineMs] [overlay]`".into()));
        }
        let mut ep = EndpointDescriptor::new(fields[1], fields[2]);
        if out.iter().any(|e| e.tag == ep.tag) {
            return Err(err(format!("duplicate tag `{}`", ep.tag)));
        }
        if !ep.base_url.starts_with("http://") {
            return Err(err(format!("`{}` is not an http URL", ep.base_url)));
        }
        if let Some(ms) = fields.get(3) {
            let ms: u64 = ms
                .parse()
                .ok()
                .filter(|ms| *ms > 0)
                .ok_or_else(|| err(format!("deadline `{ms}` must be a positive integer")))?;
            ep.deadline = Duration::from_millis(ms);
        }
        if let Some(overlay) = fields.get(4) {
            let reg = load_registry(base_dir.join(overlay)).map_err(|e| err(format!("overlay `{overlay}`: {e}")))?;
            ep = ep.with_overlay(reg);
        }
        out.push(ep);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct FederationOptions {
    pub strict: bool,
    pub page_size: usize,
}

impl Default for FederationOptions {
    fn default() -> Self {
        FederationOptions {
            strict: false,
            page_size: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FederatedRow {
    pub endpoint: String,
    /// Source tag inside the endpoint's store.
    pub source: String,
    pub id: String,
    pub record: Record,
}

impl FederatedRow {
    pub fn merged_id(&self) -> String {
        format!("{}:{}", self.endpoint, self.id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureKind {
    Connection,
    Deadline,
    Http,
    Decode,
}

impl FailureKind {
    pub fn name(self) -> &'static str {
        match self {
            FailureKind::Connection => "connection",
            FailureKind::Deadline => "deadline",
            FailureKind::Http => "http",
            FailureKind::Decode => "decode",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EndpointStatus {
    Ok { rows: usize },
    Error { kind: FailureKind, message: String },
}

/// A returned value whose kind does not fit the datatype of its record's
/// canonical type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conflict {
    pub id: String,
    pub term: QualifiedName,
    pub datatype: Datatype,
    pub value: AttributeValue,
}

#[derive(Clone, Debug)]
pub struct SourceReport {
    pub status: EndpointStatus,
    pub elapsed: Duration,
    pub conflicts: Vec<Conflict>,
}

#[derive(Clone, Debug, Default)]
pub struct FederatedResult {
    /// Sorted by (endpoint, source, id).
    pub rows: Vec<FederatedRow>,
    pub per_source: BTreeMap<String, SourceReport>,
}

#[derive(Debug)]
struct Failure {
    kind: FailureKind,
    message: String,
}

impl Failure {
    fn from_reqwest(e: reqwest::Error) -> Self {
        let kind = if e.is_timeout() {
            FailureKind::Deadline
        } else if e.is_decode() || e.is_body() {
            FailureKind::Decode
        } else if e.is_status() {
            FailureKind::Http
        } else {
            FailureKind::Connection
        };
        Failure {
            kind,
            message: e.to_string(),
        }
    }

    fn decode(message: impl Into<String>) -> Self {
        Failure {
            kind: FailureKind::Decode,
            message: message.into(),
        }
    }
}

/// Rewrites the top-level type filters into every combination of terms the
/// registry treats as equivalent. Returns just `q` when there are none or
/// when the combinations exceed [`MAX_EXPANSIONS`].
pub fn expand_query(reg: &Registry, q: &Query) -> Vec<Query> {
    let choices: Vec<Vec<QualifiedName>> = q.types.iter().map(|t| reg.equivalents(t).into_iter().collect()).collect();
    let count = choices.iter().try_fold(1usize, |acc, c| acc.checked_mul(c.len().max(1)));
    match count {
        Some(n) if n > 1 && n <= MAX_EXPANSIONS => {}
        _ => return vec![q.clone()],
    }
    let mut combos: Vec<Vec<QualifiedName>> = vec![Vec::new()];
    for options in &choices {
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                options.iter().map(move |t| {
                    let mut next = prefix.clone();
                    next.push(t.clone());
                    next
                })
            })
            .collect();
    }
    let mut out = vec![q.clone()];
    for types in combos {
        let mut expanded = q.clone();
        expanded.types = types;
        if !out.contains(&expanded) {
            out.push(expanded);
        }
    }
    out
}

fn conflicts_of(reg: &Registry, id: &str, record: &Record) -> Vec<Conflict> {
    let value_key = QualifiedName::prov("value");
    let mut out = Vec::new();
    let canonical: BTreeSet<QualifiedName> = record.types().map(|t| reg.resolve(t)).collect();
    for term in canonical {
        let Some(def) = reg.definition(&term) else {
            continue;
        };
        for a in record.attributes().iter().filter(|a| a.key == value_key) {
            if !fits(def.datatype, &a.value) {
                out.push(Conflict {
                    id: id.to_string(),
                    term: term.clone(),
                    datatype: def.datatype,
                    value: a.value.clone(),
                });
            }
        }
    }
    out
}

fn fits(datatype: Datatype, value: &AttributeValue) -> bool {
    match (datatype, value) {
        (Datatype::String, _) => true,
        (Datatype::Integer, AttributeValue::Number(n)) => n.fract().is_zero(),
        (Datatype::Decimal, AttributeValue::Number(_)) => true,
        (Datatype::Datetime, AttributeValue::Text(t)) => nidm_core::model::Timestamp::parse(t).is_some(),
        (Datatype::Uri, AttributeValue::Uri(_)) => true,
        (Datatype::Term, AttributeValue::Term(_)) => true,
        _ => false,
    }
}

fn record_of(document: &Value) -> Result<(Document, Record), Failure> {
    let doc = document_from_json_value(document).map_err(|e| Failure::decode(e.to_string()))?;
    let record = doc
        .records()
        .first()
        .cloned()
        .ok_or_else(|| Failure::decode("row document has no record"))?;
    Ok((doc, record))
}

async fn fetch_query(
    client: &reqwest::Client,
    ep: &EndpointDescriptor,
    query: &Query,
    page_size: usize,
) -> Result<Vec<(String, String, Document, Record)>, Failure> {
    let mut rows = Vec::new();
    let mut page = 1usize;
    loop {
        let response = client
            .post(ep.url(&format!("/v1/query?format=json&page={page}&pageSize={page_size}")))
            .header("content-type", "text/plain")
            .body(query.to_string())
            .send()
            .await
            .map_err(Failure::from_reqwest)?;
        let status = response.status();
        let body = response.text().await.map_err(Failure::from_reqwest)?;
        if !status.is_success() {
            return Err(Failure {
                kind: FailureKind::Http,
                message: format!("status {}: {body}", status.as_u16()),
            });
        }
        let envelope: Value = serde_json::from_str(&body).map_err(|e| Failure::decode(e.to_string()))?;
        let items = envelope
            .get("rows")
            .and_then(Value::as_array)
            .ok_or_else(|| Failure::decode("response has no `rows` array"))?;
        for item in items {
            let source = item.get("source").and_then(Value::as_str);
            let id = item.get("id").and_then(Value::as_str);
            let (Some(source), Some(id), Some(document)) = (source, id, item.get("document")) else {
                return Err(Failure::decode("row lacks source, id or document"));
            };
            let (doc, record) = record_of(document)?;
            rows.push((source.to_string(), id.to_string(), doc, record));
        }
        match envelope.get("nextPage").and_then(Value::as_u64) {
            Some(next) if next as usize > page => page = next as usize,
            _ => return Ok(rows),
        }
    }
}

async fn query_endpoint(
    client: reqwest::Client,
    ep: EndpointDescriptor,
    reg: Arc<Registry>,
    q: Query,
    page_size: usize,
) -> (Result<Vec<FederatedRow>, Failure>, Vec<Conflict>, Duration) {
    let started = Instant::now();
    let queries = expand_query(&reg, &q);
    let work = async {
        let mut seen = BTreeMap::new();
        for query in &queries {
            for (source, id, doc, _) in fetch_query(&client, &ep, query, page_size).await? {
                seen.entry((source, id)).or_insert(doc);
            }
        }
        Ok::<_, Failure>(seen)
    };
    let fetched = match tokio::time::timeout(ep.deadline, work).await {
        Ok(r) => r,
        Err(_) => Err(Failure {
            kind: FailureKind::Deadline,
            message: format!("no complete answer within {} ms", ep.deadline.as_millis()),
        }),
    };
    let elapsed = started.elapsed();
    let mut conflicts = Vec::new();
    let rows = fetched.map(|seen| {
        seen.into_iter()
            .map(|((source, id), doc)| {
                let harmonized = harmonize(&reg, &doc);
                let record = harmonized.records()[0].clone();
                conflicts.extend(conflicts_of(&reg, &id, &record));
                FederatedRow {
                    endpoint: ep.tag.clone(),
                    source,
                    id,
                    record,
                }
            })
            .collect()
    });
    (rows, conflicts, elapsed)
}

fn merged_registry(base: &Registry, ep: &EndpointDescriptor) -> Result<Arc<Registry>, MediatorError> {
    match &ep.overlay {
        Some(overlay) => base.overlay(overlay).map(Arc::new).map_err(|source| MediatorError::Overlay {
            tag: ep.tag.clone(),
            source,
        }),
        None => Ok(Arc::new(base.clone())),
    }
}

/// Sends `q` to every endpoint at once and merges the answers. Endpoints
/// that fail or miss their deadline contribute no rows and an error entry
/// in `per_source`.
pub async fn federated_query(
    endpoints: &[EndpointDescriptor],
    registry: &Registry,
    q: &Query,
    options: FederationOptions,
) -> Result<FederatedResult, MediatorError> {
    if endpoints.is_empty() {
        return if options.strict {
            Err(MediatorError::NoEndpoints)
        } else {
            Ok(FederatedResult::default())
        };
    }
    q.check(nidm_core::query::DEFAULT_MAX_PATH)?;
    let client = reqwest::Client::new();
    let mut tasks = Vec::new();
    for ep in endpoints {
        let reg = merged_registry(registry, ep)?;
        let task = tokio::spawn(query_endpoint(client.clone(), ep.clone(), reg, q.clone(), options.page_size.max(1)));
        tasks.push((ep.tag.clone(), task));
    }
    let mut result = FederatedResult::default();
    for (tag, task) in tasks {
        let (outcome, conflicts, elapsed) = task.await.unwrap_or_else(|e| {
            (
                Err(Failure {
                    kind: FailureKind::Connection,
                    message: e.to_string(),
                }),
                Vec::new(),
                Duration::ZERO,
            )
        });
        let status = match outcome {
            Ok(rows) => {
                let n = rows.len();
                result.rows.extend(rows);
                EndpointStatus::Ok { rows: n }
            }
            Err(f) => EndpointStatus::Error {
                kind: f.kind,
                message: f.message,
            },
        };
        result.per_source.insert(
            tag,
            SourceReport {
                status,
                elapsed,
                conflicts,
            },
        );
    }
    result
        .rows
        .sort_by(|a, b| (&a.endpoint, &a.source, &a.id).cmp(&(&b.endpoint, &b.source, &b.id)));
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProbeOutcome {
    Ok {
        formats: Vec<String>,
        /// Totals over every source: records, entities, activities, agents, relations.
        counts: BTreeMap<String, u64>,
        sources: Vec<String>,
    },
    Unreachable { message: String },
    DeadlineExceeded,
    BadResponse { message: String },
}

#[derive(Clone, Debug)]
pub struct ProbeReport {
    pub tag: String,
    pub elapsed: Duration,
    pub outcome: ProbeOutcome,
}

async fn fetch_meta(ep: &EndpointDescriptor) -> Result<Value, ProbeOutcome> {
    let response = reqwest::Client::new()
        .get(ep.url("/v1/meta"))
        .send()
        .await
        .map_err(|e| ProbeOutcome::Unreachable { message: e.to_string() })?;
    let status = response.status();
    let body = response
        .text()
        .await
        .map_err(|e| ProbeOutcome::BadResponse { message: e.to_string() })?;
    if !status.is_success() {
        return Err(ProbeOutcome::BadResponse {
            message: format!("status {}", status.as_u16()),
        });
    }
    serde_json::from_str(&body).map_err(|e| ProbeOutcome::BadResponse { message: e.to_string() })
}

/// Asks an endpoint for its metadata. Never fails; problems are part of
/// the report.
pub async fn probe(ep: &EndpointDescriptor) -> ProbeReport {
    let started = Instant::now();
    let outcome = match tokio::time::timeout(ep.deadline, fetch_meta(ep)).await {
        Err(_) => ProbeOutcome::DeadlineExceeded,
        Ok(Err(outcome)) => outcome,
        Ok(Ok(meta)) => {
            let formats = meta
                .get("formats")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
                .unwrap_or_default();
            let mut counts = BTreeMap::new();
            let mut sources = Vec::new();
            for s in meta.get("sources").and_then(Value::as_array).into_iter().flatten() {
                if let Some(tag) = s.get("tag").and_then(Value::as_str) {
                    sources.push(tag.to_string());
                }
                for key in ["records", "entities", "activities", "agents", "relations"] {
                    *counts.entry(key.to_string()).or_insert(0) += s.get(key).and_then(Value::as_u64).unwrap_or(0);
                }
            }
            ProbeOutcome::Ok { formats, counts, sources }
        }
    };
    ProbeReport {
        tag: ep.tag.clone(),
        elapsed: started.elapsed(),
        outcome,
    }
}
