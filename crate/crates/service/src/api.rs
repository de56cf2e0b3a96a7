//! REST endpoints over a [`Store`].

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, Query as QueryParams, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use nidm_core::codecs::{document_to_json_value, parse as parse_document, write_provn, write_xml, Format, XmlMode};
use nidm_core::model::{Category, Document, QualifiedName, Record, Relation};
use nidm_core::query::{AttrFilter, Comparator, ResultRow};
use nidm_core::store::{members_on, run_query_on, Snapshot};
use nidm_core::{parse_literal, parse_query, provenance_closure, read_document, store_sources, NidmError, Query, QueryLimits, Registry, Store};

use crate::ServiceError;

#[derive(Clone, Debug)]
pub struct ApiConfig {
    pub bind: String,
    pub default_format: Format,
    pub max_page_size: usize,
    /// `tag=path`, a document path, or a directory.
    pub store_paths: Vec<String>,
    pub registry_path: Option<PathBuf>,
    pub allow_external: bool,
    pub limits: QueryLimits,
    pub log_requests: bool,
}

impl Default for ApiConfig {
    fn default() -> Self {
        ApiConfig {
            bind: "127.0.0.1:0".into(),
            default_format: Format::Json,
            max_page_size: 1000,
            store_paths: Vec::new(),
            registry_path: None,
            allow_external: false,
            limits: QueryLimits::default(),
            log_requests: false,
        }
    }
}

pub struct AppState {
    pub store: Store,
    pub default_format: Format,
    pub max_page_size: usize,
}

/// Loads the registry and every store path into a fresh store.
pub fn build_state(config: &ApiConfig) -> Result<Arc<AppState>, ServiceError> {
    if config.max_page_size == 0 {
        return Err(ServiceError::Config("maxPageSize must be at least 1".into()));
    }
    let registry = match &config.registry_path {
        Some(path) => nidm_core::load_registry(path).map_err(|e| ServiceError::Load {
            path: path.clone(),
            message: e.to_string(),
        })?,
        None => Registry::empty(),
    };
    let store = Store::with_limits(Arc::new(registry), config.limits);
    for spec in &config.store_paths {
        let sources = store_sources(spec).map_err(|e| ServiceError::Load {
            path: spec.into(),
            message: e.to_string(),
        })?;
        for (tag, path) in sources {
            let load = |e: NidmError| ServiceError::Load {
                path: path.clone(),
                message: e.to_string(),
            };
            let doc = read_document(&path).map_err(load)?;
            store.ingest(&tag, &doc).map_err(load)?;
        }
    }
    Ok(Arc::new(AppState {
        store,
        default_format: config.default_format,
        max_page_size: config.max_page_size,
    }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/meta", get(meta))
        .route("/v1/query", post(post_query))
        .route("/v1/documents", post(post_document))
        .route("/v1/entities/{id}/provenance", get(provenance))
        .route("/v1/collections/{id}/members", get(collection_members))
        .route("/v1/{category}", get(list))
        .route("/v1/{category}/{id}", get(get_record))
        .fallback(not_found)
        .with_state(state)
}

/// A running service.
pub struct ServiceHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }
}

pub async fn serve(config: ApiConfig) -> Result<ServiceHandle, ServiceError> {
    let addr: SocketAddr = tokio::net::lookup_host(&config.bind)
        .await
        .ok()
        .and_then(|mut it| it.next())
        .ok_or_else(|| ServiceError::Bind {
            addr: config.bind.clone(),
            message: "address does not resolve".into(),
        })?;
    if !addr.ip().is_loopback() && !config.allow_external {
        return Err(ServiceError::Bind {
            addr: config.bind.clone(),
            message: "refusing a non-loopback address without allow-external".into(),
        });
    }
    let state = build_state(&config)?;
    let listener = TcpListener::bind(addr).await.map_err(|e| ServiceError::Bind {
        addr: config.bind.clone(),
        message: e.to_string(),
    })?;
    let addr = listener.local_addr().map_err(|e| ServiceError::Bind {
        addr: config.bind.clone(),
        message: e.to_string(),
    })?;
    let mut app = router(state);
    if config.log_requests {
        app = app.layer(middleware::from_fn(log_request));
    }
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
    });
    Ok(ServiceHandle {
        addr,
        shutdown: Some(tx),
        task,
    })
}

async fn log_request(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let uri = req.uri().clone();
    let started = Instant::now();
    let response = next.run(req).await;
    tracing::info!(
        method = %method,
        uri = %uri,
        status = response.status().as_u16(),
        elapsed_ms = started.elapsed().as_millis() as u64,
        "request"
    );
    response
}

// ---- errors -----------------------------------------------------------

pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
    detail: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.into(),
            message: message.into(),
            detail: Value::Null,
        }
    }

    fn bad_param(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "BadParameter", message)
    }
}

impl From<NidmError> for ApiError {
    fn from(e: NidmError) -> Self {
        let status = match &e {
            NidmError::UnknownId(_) => StatusCode::NOT_FOUND,
            NidmError::InvalidDocument(_) | NidmError::NotACollection(_) => StatusCode::UNPROCESSABLE_ENTITY,
            NidmError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        let detail = match &e {
            NidmError::Parse(p) => json!({
                "line": p.span.line,
                "column": p.span.column,
                "length": p.span.length,
                "expected": p.expected,
                "found": p.found,
                "path": p.path,
            }),
            NidmError::InvalidDocument(report) => Value::Array(
                report
                    .violations
                    .iter()
                    .map(|v| json!({"index": v.index, "code": v.code.name(), "subject": v.subject, "message": v.message}))
                    .collect(),
            ),
            NidmError::UndeclaredPrefix { prefix, line, column } => {
                json!({"prefix": prefix, "line": line, "column": column})
            }
            _ => Value::Null,
        };
        ApiError {
            status,
            code: e.code().into(),
            message: e.to_string(),
            detail,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"code": self.code, "message": self.message, "detail": self.detail});
        (self.status, [(header::CONTENT_TYPE, "application/json")], body.to_string()).into_response()
    }
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such resource")
}

// ---- parameters -------------------------------------------------------

type Params = QueryParams<Vec<(String, String)>>;

struct ListParams {
    format: Format,
    types: Vec<QualifiedName>,
    attrs: Vec<AttrFilter>,
    page: usize,
    page_size: usize,
    source: Option<String>,
    kind: Option<String>,
}

fn negotiate(params: &[(String, String)], headers: &HeaderMap, default: Format) -> Result<Format, ApiError> {
    if let Some((_, f)) = params.iter().find(|(k, _)| k == "format") {
        return Format::from_name(f).ok_or_else(|| ApiError::bad_param(format!("unknown format `{f}`")));
    }
    if let Some(accept) = headers.get(header::ACCEPT).and_then(|v| v.to_str().ok()) {
        for media in accept.split(',') {
            if let Some(f) = Format::from_media_type(media) {
                return Ok(f);
            }
        }
    }
    Ok(default)
}

fn list_params(params: &[(String, String)], headers: &HeaderMap, state: &AppState) -> Result<ListParams, ApiError> {
    let format = negotiate(params, headers, state.default_format)?;
    let mut out = ListParams {
        format,
        types: Vec::new(),
        attrs: Vec::new(),
        page: 1,
        page_size: state.max_page_size.min(100),
        source: None,
        kind: None,
    };
    for (k, v) in params {
        match k.as_str() {
            "format" => {}
            "type" => out.types.push(v.parse().map_err(|_| ApiError::bad_param(format!("`{v}` is not a qualified name")))?),
            "page" => out.page = v.parse().ok().filter(|p| *p >= 1).ok_or_else(|| ApiError::bad_param("page must be a positive integer"))?,
            "pageSize" => {
                out.page_size = v
                    .parse()
                    .ok()
                    .filter(|p| (1..=state.max_page_size).contains(p))
                    .ok_or_else(|| ApiError::bad_param(format!("pageSize must be between 1 and {}", state.max_page_size)))?
            }
            "source" => out.source = Some(v.clone()),
            "kind" => out.kind = Some(v.clone()),
            key => match key.strip_prefix("attr.") {
                Some(name) => {
                    let key: QualifiedName = name.parse().map_err(|_| ApiError::bad_param(format!("`{name}` is not a qualified name")))?;
                    let value = parse_literal(v).unwrap_or_else(|_| nidm_core::AttributeValue::Text(v.clone()));
                    out.attrs.push(AttrFilter::new(key, Comparator::Eq, value));
                }
                None => return Err(ApiError::bad_param(format!("unknown parameter `{key}`"))),
            },
        }
    }
    Ok(out)
}

fn single_source(params: &[(String, String)]) -> Option<&str> {
    params.iter().find(|(k, _)| k == "source").map(|(_, v)| v.as_str())
}

// ---- encoding ---------------------------------------------------------

/// A row ready for encoding: relations carry a positional id.
struct Row {
    source: String,
    id: String,
    record: Record,
}

impl From<ResultRow> for Row {
    fn from(r: ResultRow) -> Self {
        Row {
            source: r.source,
            id: r.id,
            record: r.record,
        }
    }
}

fn text_response(format: Format, body: String) -> Response {
    ([(header::CONTENT_TYPE, format.media_type())], body).into_response()
}

fn encode_document(format: Format, doc: &Document) -> String {
    match format {
        Format::Provn => write_provn(doc),
        Format::Xml => write_xml(doc, XmlMode::Canonical),
        Format::Json => document_to_json_value(doc).to_string(),
    }
}

fn namespaces_of(snapshot: &Snapshot, source: &str) -> BTreeMap<String, String> {
    snapshot.source(source).map(|d| d.namespaces().clone()).unwrap_or_default()
}

fn row_document(snapshot: &Snapshot, row: &Row) -> Document {
    Document::new(namespaces_of(snapshot, &row.source), vec![row.record.clone()]).expect("single record")
}

fn renamed(record: &Record, tag: &str) -> Record {
    let p = |id: &str| format!("{tag}.{id}");
    let mut r = record.clone();
    match &mut r {
        Record::Entity(e) => e.id = p(&e.id),
        Record::Activity(a) => a.id = p(&a.id),
        Record::Agent(a) => a.id = p(&a.id),
        Record::Relation(Relation { subject, object, plan, .. }) => {
            *subject = p(subject);
            *object = p(object);
            if let Some(plan) = plan {
                *plan = p(plan);
            }
        }
    }
    r
}

/// One page of rows. JSON gets an envelope; PROV-N and XML get a single
/// document with paging in headers. When a page mixes sources, ids in the
/// document form are written `tag.id`.
fn list_response(snapshot: &Snapshot, format: Format, rows: Vec<Row>, total: usize, page: usize, page_size: usize) -> Response {
    let next = (page * page_size < total).then_some(page + 1);
    let start = (page - 1).saturating_mul(page_size);
    let page_rows: Vec<Row> = rows.into_iter().skip(start).take(page_size).collect();
    if format == Format::Json {
        let rows: Vec<Value> = page_rows
            .iter()
            .map(|r| json!({"source": r.source, "id": r.id, "document": document_to_json_value(&row_document(snapshot, r))}))
            .collect();
        let body = json!({"total": total, "page": page, "pageSize": page_size, "nextPage": next, "rows": rows});
        return text_response(format, body.to_string());
    }
    let mut sources: Vec<&str> = page_rows.iter().map(|r| r.source.as_str()).collect();
    sources.dedup();
    let mixed = sources.len() > 1;
    let mut namespaces = BTreeMap::new();
    for s in &sources {
        namespaces.extend(namespaces_of(snapshot, s));
    }
    let records: Vec<Record> = page_rows
        .iter()
        .map(|r| if mixed { renamed(&r.record, &r.source) } else { r.record.clone() })
        .collect();
    let doc = Document::new(namespaces, records).expect("ids unique within a page");
    let mut response = text_response(format, encode_document(format, &doc));
    let headers = response.headers_mut();
    headers.insert("X-Total-Count", HeaderValue::from(total));
    if let Some(n) = next {
        headers.insert("X-Next-Page", HeaderValue::from(n));
    }
    response
}

/// Relations of one source numbered `rel-1`, `rel-2`, ... in document order.
fn relation_rows(snapshot: &Snapshot) -> Vec<Row> {
    snapshot
        .sources()
        .flat_map(|(tag, doc)| {
            doc.relations().enumerate().map(move |(i, r)| Row {
                source: tag.to_string(),
                id: format!("rel-{}", i + 1),
                record: Record::Relation(r.clone()),
            })
        })
        .collect()
}

fn category_of(segment: &str) -> Option<Option<Category>> {
    match segment {
        "entities" => Some(Some(Category::Entity)),
        "activities" => Some(Some(Category::Activity)),
        "agents" => Some(Some(Category::Agent)),
        "relations" => Some(None),
        _ => None,
    }
}

// ---- handlers ---------------------------------------------------------

async fn meta(State(state): State<Arc<AppState>>) -> Response {
    let snapshot = state.store.snapshot();
    let sources: Vec<Value> = snapshot
        .sources()
        .map(|(tag, doc)| {
            json!({
                "tag": tag,
                "records": doc.len(),
                "entities": doc.entities().count(),
                "activities": doc.activities().count(),
                "agents": doc.agents().count(),
                "relations": doc.relations().count(),
            })
        })
        .collect();
    let body = json!({
        "service": "nidm",
        "version": env!("CARGO_PKG_VERSION"),
        "formats": Format::ALL.iter().map(|f| f.name()).collect::<Vec<_>>(),
        "defaultFormat": state.default_format.name(),
        "maxPageSize": state.max_page_size,
        "sources": sources,
    });
    text_response(Format::Json, body.to_string())
}

async fn list(
    State(state): State<Arc<AppState>>,
    Path(category): Path<String>,
    QueryParams(params): Params,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let Some(cat) = category_of(&category) else {
        return Err(not_found().await);
    };
    let p = list_params(&params, &headers, &state)?;
    let snapshot = state.store.snapshot();
    let reg = state.store.registry();
    let rows: Vec<Row> = match cat {
        Some(cat) => {
            if p.kind.is_some() {
                return Err(ApiError::bad_param("`kind` applies to relations only"));
            }
            let q = Query {
                select: cat,
                types: p.types.clone(),
                attrs: p.attrs.clone(),
                paths: Vec::new(),
            };
            run_query_on(&snapshot, reg, &q, state.store.limits())?
                .rows
                .into_iter()
                .map(Row::from)
                .collect()
        }
        None => {
            let filter = nidm_core::RecordFilter {
                category: None,
                types: p.types.clone(),
                attrs: p.attrs.clone(),
            };
            relation_rows(&snapshot)
                .into_iter()
                .filter(|r| {
                    let rel = r.record.as_relation().expect("relation row");
                    p.kind.as_deref().is_none_or(|k| rel.kind.name() == k) && filter.matches(reg, &r.record)
                })
                .collect()
        }
    };
    let rows: Vec<Row> = rows
        .into_iter()
        .filter(|r| p.source.as_deref().is_none_or(|s| s == r.source))
        .collect();
    let total = rows.len();
    Ok(list_response(&snapshot, p.format, rows, total, p.page, p.page_size))
}

fn find_one<'a>(snapshot: &'a Snapshot, cat: Option<Category>, source: Option<&str>, id: &str) -> Result<Row, ApiError> {
    let found: Vec<Row> = match cat {
        Some(cat) => snapshot
            .lookup(source, id)
            .into_iter()
            .filter(|(_, r)| r.category() == Some(cat))
            .map(|(tag, r)| Row {
                source: tag.to_string(),
                id: id.to_string(),
                record: r.clone(),
            })
            .collect(),
        None => relation_rows(snapshot)
            .into_iter()
            .filter(|r| r.id == id && source.is_none_or(|s| s == r.source))
            .collect(),
    };
    match found.len() {
        0 => Err(NidmError::UnknownId(id.to_string()).into()),
        1 => Ok(found.into_iter().next().unwrap()),
        _ => {
            let mut e = ApiError::new(
                StatusCode::CONFLICT,
                "AmbiguousId",
                format!("`{id}` exists in several sources; pass ?source="),
            );
            e.detail = json!({"sources": found.iter().map(|r| r.source.clone()).collect::<Vec<_>>()});
            Err(e)
        }
    }
}

fn record_response(snapshot: &Snapshot, format: Format, row: &Row, doc: &Document) -> Response {
    let mut response = if format == Format::Json {
        let body = json!({"source": row.source, "id": row.id, "document": document_to_json_value(doc)});
        text_response(format, body.to_string())
    } else {
        text_response(format, encode_document(format, doc))
    };
    let _ = snapshot;
    if let Ok(v) = HeaderValue::from_str(&row.source) {
        response.headers_mut().insert("X-Source", v);
    }
    response
}

async fn get_record(
    State(state): State<Arc<AppState>>,
    Path((category, id)): Path<(String, String)>,
    QueryParams(params): Params,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let Some(cat) = category_of(&category) else {
        return Err(not_found().await);
    };
    let format = negotiate(&params, &headers, state.default_format)?;
    let snapshot = state.store.snapshot();
    let row = find_one(&snapshot, cat, single_source(&params), &id)?;
    let doc = row_document(&snapshot, &row);
    Ok(record_response(&snapshot, format, &row, &doc))
}

async fn provenance(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    QueryParams(params): Params,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let format = negotiate(&params, &headers, state.default_format)?;
    let snapshot = state.store.snapshot();
    let row = find_one(&snapshot, Some(Category::Entity), single_source(&params), &id)?;
    let source_doc = snapshot.source(&row.source).expect("row source exists");
    let closure = provenance_closure(source_doc, &id)?;
    Ok(record_response(&snapshot, format, &row, &closure))
}

async fn collection_members(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    QueryParams(params): Params,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let p = list_params(&params, &headers, &state)?;
    let snapshot = state.store.snapshot();
    let result = members_on(&snapshot, p.source.as_deref(), &id, state.store.limits().max_rows)?;
    let total = result.total;
    let rows = result.rows.into_iter().map(Row::from).collect();
    Ok(list_response(&snapshot, p.format, rows, total, p.page, p.page_size))
}

async fn post_query(
    State(state): State<Arc<AppState>>,
    QueryParams(mut params): Params,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let text = String::from_utf8(body.to_vec()).map_err(|_| ApiError::bad_param("body is not UTF-8"))?;
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    let query_text = if is_json {
        let v: Value = serde_json::from_str(&text).map_err(|e| ApiError::bad_param(format!("body: {e}")))?;
        for key in ["page", "pageSize"] {
            if let Some(n) = v.get(key).and_then(Value::as_u64) {
                params.push((key.to_string(), n.to_string()));
            }
        }
        v.get("query")
            .and_then(Value::as_str)
            .ok_or_else(|| ApiError::bad_param("body needs a `query` string"))?
            .to_string()
    } else {
        text
    };
    let p = list_params(&params, &headers, &state)?;
    let q = parse_query(&query_text)?;
    let snapshot = state.store.snapshot();
    let result = run_query_on(&snapshot, state.store.registry(), &q, state.store.limits())?;
    let total = result.rows.len();
    let rows = result
        .rows
        .into_iter()
        .map(Row::from)
        .filter(|r| p.source.as_deref().is_none_or(|s| s == r.source))
        .collect::<Vec<_>>();
    let total = if p.source.is_some() { rows.len() } else { total };
    Ok(list_response(&snapshot, p.format, rows, total, p.page, p.page_size))
}

async fn post_document(
    State(state): State<Arc<AppState>>,
    QueryParams(params): Params,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let source = single_source(&params).ok_or_else(|| ApiError::bad_param("`source` parameter is required"))?;
    let text = String::from_utf8(body.to_vec()).map_err(|_| ApiError::bad_param("body is not UTF-8"))?;
    let format = match params.iter().find(|(k, _)| k == "format") {
        Some((_, f)) => Format::from_name(f).ok_or_else(|| ApiError::bad_param(format!("unknown format `{f}`")))?,
        None => headers
            .get(header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .and_then(Format::from_media_type)
            .unwrap_or_else(|| Format::sniff(&text)),
    };
    let doc = if text.trim().is_empty() {
        Document::empty()
    } else {
        parse_document(format, &text)?
    };
    let s = state.store.ingest(source, &doc)?;
    let body = json!({
        "source": s.source,
        "records": s.records,
        "entities": s.entities,
        "plans": s.plans,
        "collections": s.collections,
        "values": s.values,
        "activities": s.activities,
        "agents": s.agents,
        "relations": s.relations,
    });
    Ok(text_response(Format::Json, body.to_string()))
}
