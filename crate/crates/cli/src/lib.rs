//! The `nidm` command line.
//!
//! Exit codes: 0 on success, 1 on a domain error (parse, validation,
//! query), 2 on a usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nidm_core::codecs::{parse as parse_document, serialize, serialize_xml, Format, XmlMode};
use nidm_core::model::{Category, Document, QualifiedName, Record};
use nidm_core::{
    extract_spm_batch, extract_with_rules, load_registry, parse_query, provenance_closure, read_document,
    store_sources, validate, NidmError, Registry, ResultSet, RuleSet, Store,
};
use nidm_service::{
    federated_query, load_federation, probe, serve, ApiConfig, EndpointDescriptor, EndpointStatus, FederationOptions,
    ProbeOutcome,
};

#[derive(Parser, Debug)]
#[command(name = "nidm", version, about = "Provenance metadata toolkit for neuroimaging data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check documents against the model constraints.
    Validate {
        /// Document files, or `-` for standard input.
        #[arg(required = true)]
        inputs: Vec<String>,
        /// Input format; guessed from the extension or content when absent.
        #[arg(long)]
        from: Option<CodecArg>,
    },
    /// Convert a document between PROV-N, XML and JSON.
    Convert {
        #[arg(long)]
        from: Option<CodecArg>,
        #[arg(long)]
        to: CodecArg,
        #[arg(long, default_value = "canonical")]
        xml_mode: XmlModeArg,
        /// Document file, or `-` for standard input.
        #[arg(default_value = "-")]
        input: String,
    },
    /// Build provenance from a processing log.
    Extract {
        #[command(subcommand)]
        kind: ExtractKind,
    },
    /// Run a query over one or more stores.
    Query {
        /// `tag=path`, a document, or a directory. Repeatable.
        #[arg(long = "store", required = true)]
        stores: Vec<String>,
        #[command(flatten)]
        registry: RegistryArg,
        /// `table` (tab-separated) or a codec format.
        #[arg(long, default_value = "table")]
        format: OutputArg,
        query: String,
    },
    /// Provenance closure of an entity.
    Closure {
        input: String,
        id: String,
        /// A codec format or `dot`.
        #[arg(long, default_value = "provn")]
        format: ClosureFormat,
    },
    /// Inspect the terminology registry.
    Terms {
        #[command(flatten)]
        registry: RegistryArg,
        #[command(subcommand)]
        action: TermsAction,
    },
    /// Serve stores over HTTP until interrupted.
    Serve {
        #[arg(long = "store")]
        stores: Vec<String>,
        #[command(flatten)]
        registry: RegistryArg,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long, default_value = "json")]
        default_format: CodecArg,
        #[arg(long, default_value_t = 1000)]
        max_page_size: usize,
        /// Permit binding to a non-loopback address.
        #[arg(long)]
        allow_external: bool,
    },
    /// Run one query across the endpoints of a federation file.
    Mediate {
        #[arg(long)]
        federation: PathBuf,
        #[command(flatten)]
        registry: RegistryArg,
        /// Fail when the federation lists no endpoints.
        #[arg(long)]
        strict: bool,
        /// `table` or `json`.
        #[arg(long, default_value = "table")]
        format: MediateFormat,
        query: String,
    },
    /// Report capabilities and latency of endpoints.
    Probe {
        #[arg(long, conflicts_with = "url")]
        federation: Option<PathBuf>,
        #[arg(long)]
        url: Option<String>,
        #[arg(long, default_value_t = 5000)]
        deadline_ms: u64,
    },
}

#[derive(Subcommand, Debug)]
pub enum ExtractKind {
    /// SPM batch log (BEGIN/PARAM/IN/OUT/END directives).
    Spm {
        log: String,
        #[command(flatten)]
        output: ExtractOutput,
    },
    /// Any log, using a rules file.
    Rules {
        #[arg(long)]
        rules: PathBuf,
        log: String,
        #[command(flatten)]
        output: ExtractOutput,
    },
}

#[derive(Args, Debug)]
pub struct ExtractOutput {
    #[arg(long, default_value = "xml")]
    format: CodecArg,
    #[arg(long, default_value = "canonical")]
    xml_mode: XmlModeArg,
}

#[derive(Subcommand, Debug)]
pub enum TermsAction {
    /// Canonical form of each term.
    Resolve {
        #[arg(required = true)]
        terms: Vec<String>,
    },
    /// Every definition and mapping.
    List,
}

#[derive(Args, Debug)]
pub struct RegistryArg {
    /// Registry file.
    #[arg(long = "registry", env = "NIDM_REGISTRY")]
    path: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CodecArg {
    Provn,
    Xml,
    Json,
}

impl From<CodecArg> for Format {
    fn from(c: CodecArg) -> Format {
        match c {
            CodecArg::Provn => Format::Provn,
            CodecArg::Xml => Format::Xml,
            CodecArg::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum XmlModeArg {
    Canonical,
    SpmLegacy,
}

impl From<XmlModeArg> for XmlMode {
    fn from(m: XmlModeArg) -> XmlMode {
        match m {
            XmlModeArg::Canonical => XmlMode::Canonical,
            XmlModeArg::SpmLegacy => XmlMode::SpmLegacy,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OutputArg {
    Table,
    Provn,
    Xml,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ClosureFormat {
    Provn,
    Xml,
    Json,
    Dot,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MediateFormat {
    Table,
    Json,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn domain(message: impl ToString) -> Self {
        Failure {
            code: 1,
            message: message.to_string(),
        }
    }

    fn usage(message: impl ToString) -> Self {
        Failure {
            code: 2,
            message: message.to_string(),
        }
    }
}

impl From<NidmError> for Failure {
    fn from(e: NidmError) -> Self {
        match e {
            NidmError::Io(io) => Failure::usage(io),
            other => Failure::domain(other),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(e)
    }
}

type Outcome = Result<(), Failure>;

/// Parses `args` and runs the command, writing data to `out` and
/// diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match command {
        Command::Validate { inputs, from } => cmd_validate(&inputs, from, out, err),
        Command::Convert {
            from,
            to,
            xml_mode,
            input,
        } => {
            let doc = load(&input, from)?;
            let text = encode(&doc, to.into(), xml_mode.into())?;
            write!(out, "{text}")?;
            Ok(())
        }
        Command::Extract { kind } => cmd_extract(kind, out, err),
        Command::Query {
            stores,
            registry,
            format,
            query,
        } => cmd_query(&stores, &registry, format, &query, out),
        Command::Closure { input, id, format } => {
            let doc = load(&input, None)?;
            let closure = provenance_closure(&doc, &id)?;
            let text = match format {
                ClosureFormat::Provn => encode(&closure, Format::Provn, XmlMode::Canonical)?,
                ClosureFormat::Xml => encode(&closure, Format::Xml, XmlMode::Canonical)?,
                ClosureFormat::Json => encode(&closure, Format::Json, XmlMode::Canonical)?,
                ClosureFormat::Dot => to_dot(&closure),
            };
            write!(out, "{text}")?;
            Ok(())
        }
        Command::Terms { registry, action } => cmd_terms(&registry, action, out),
        Command::Serve {
            stores,
            registry,
            bind,
            default_format,
            max_page_size,
            allow_external,
        } => {
            let _ = tracing_subscriber::fmt().with_writer(std::io::stderr).try_init();
            let config = ApiConfig {
                bind,
                default_format: default_format.into(),
                max_page_size,
                store_paths: stores,
                registry_path: registry.path,
                allow_external,
                log_requests: true,
                ..ApiConfig::default()
            };
            runtime()?.block_on(async {
                let handle = serve(config).await.map_err(|e| match e {
                    nidm_service::ServiceError::Load { .. } => Failure::domain(e),
                    other => Failure::usage(other),
                })?;
                writeln!(err, "listening on {}", handle.base_url())?;
                let _ = tokio::signal::ctrl_c().await;
                handle.shutdown().await;
                Ok(())
            })
        }
        Command::Mediate {
            federation,
            registry,
            strict,
            format,
            query,
        } => cmd_mediate(&federation, &registry, strict, format, &query, out, err),
        Command::Probe {
            federation,
            url,
            deadline_ms,
        } => cmd_probe(federation, url, deadline_ms, out),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::usage(e))
}

fn read_input(input: &str) -> Result<String, Failure> {
    if input == "-" {
        let mut text = String::new();
        std::io::stdin().read_to_string(&mut text)?;
        Ok(text)
    } else {
        std::fs::read_to_string(input).map_err(|e| Failure::usage(format!("{input}: {e}")))
    }
}

/// Reads a document, taking the format from the flag, then the extension,
/// then the content.
pub fn load(input: &str, from: Option<CodecArg>) -> Result<Document, Failure> {
    let text = read_input(input)?;
    let format = from
        .map(Format::from)
        .or_else(|| Format::from_path(Path::new(input)))
        .unwrap_or_else(|| Format::sniff(&text));
    parse_document(format, &text).map_err(|e| Failure::domain(format!("{input}: {e}")))
}

fn encode(doc: &Document, format: Format, mode: XmlMode) -> Result<String, Failure> {
    let text = match format {
        Format::Xml => serialize_xml(doc, mode)?,
        other => serialize(other, doc)?,
    };
    Ok(if text.ends_with('\n') { text } else { text + "\n" })
}

fn load_registry_arg(arg: &RegistryArg) -> Result<Registry, Failure> {
    match &arg.path {
        Some(path) => load_registry(path).map_err(|e| Failure::domain(format!("{}: {e}", path.display()))),
        None => Ok(Registry::empty()),
    }
}

fn cmd_validate(inputs: &[String], from: Option<CodecArg>, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let mut invalid = 0;
    for input in inputs {
        let doc = load(input, from)?;
        let report = validate(&doc);
        if report.is_valid() {
            writeln!(out, "{input}: valid ({} records)", doc.len())?;
        } else {
            invalid += 1;
            for v in &report.violations {
                writeln!(err, "{input}: record {}: {} {}: {}", v.index, v.code, v.subject, v.message)?;
            }
        }
    }
    if invalid > 0 {
        return Err(Failure::domain(format!("{invalid} invalid document(s)")));
    }
    Ok(())
}

fn cmd_extract(kind: ExtractKind, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let (doc, output) = match kind {
        ExtractKind::Spm { log, output } => (extract_spm_batch(&read_input(&log)?)?, output),
        ExtractKind::Rules { rules, log, output } => {
            let text = std::fs::read_to_string(&rules).map_err(|e| Failure::usage(format!("{}: {e}", rules.display())))?;
            let rules = RuleSet::parse(&text)?;
            let outcome = extract_with_rules(&read_input(&log)?, &rules)?;
            writeln!(err, "{} unmatched lines", outcome.unmatched_lines)?;
            (outcome.document, output)
        }
    };
    write!(out, "{}", encode(&doc, output.format.into(), output.xml_mode.into())?)?;
    Ok(())
}

/// Loads every store path into one store.
pub fn open_store(stores: &[String], registry: Registry) -> Result<Store, Failure> {
    let store = Store::new(Arc::new(registry));
    for spec in stores {
        for (tag, path) in store_sources(spec)? {
            let doc = read_document(&path).map_err(|e| Failure::domain(format!("{}: {e}", path.display())))?;
            store.ingest(&tag, &doc).map_err(|e| Failure::domain(format!("{}: {e}", path.display())))?;
        }
    }
    Ok(store)
}

fn types_column(record: &Record) -> String {
    record.types().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Rows as one document; ids become `source.id` when rows come from more
/// than one source.
pub fn rows_document(store: &Store, result: &ResultSet) -> Result<Document, Failure> {
    let snapshot = store.snapshot();
    let mut sources: Vec<&str> = result.rows.iter().map(|r| r.source.as_str()).collect();
    sources.dedup();
    let mixed = sources.len() > 1;
    let mut namespaces = BTreeMap::new();
    for s in &sources {
        if let Some(doc) = snapshot.source(s) {
            namespaces.extend(doc.namespaces().clone());
        }
    }
    let records = result
        .rows
        .iter()
        .map(|r| {
            let mut record = r.record.clone();
            if mixed {
                rename(&mut record, &r.source);
            }
            record
        })
        .collect();
    Ok(Document::new(namespaces, records)?)
}

fn rename(record: &mut Record, tag: &str) {
    let id = match record {
        Record::Entity(e) => &mut e.id,
        Record::Activity(a) => &mut a.id,
        Record::Agent(a) => &mut a.id,
        Record::Relation(_) => return,
    };
    *id = format!("{tag}.{id}");
}

fn cmd_query(stores: &[String], registry: &RegistryArg, format: OutputArg, query: &str, out: &mut dyn Write) -> Outcome {
    let q = parse_query(query)?;
    let store = open_store(stores, load_registry_arg(registry)?)?;
    let result = store.run_query(&q)?;
    let format = match format {
        OutputArg::Table => {
            writeln!(out, "source\tid\tcategory\ttypes")?;
            for row in &result.rows {
                let category = row.record.category().map_or("relation", Category::name);
                writeln!(out, "{}\t{}\t{}\t{}", row.source, row.id, category, types_column(&row.record))?;
            }
            return Ok(());
        }
        OutputArg::Provn => Format::Provn,
        OutputArg::Xml => Format::Xml,
        OutputArg::Json => Format::Json,
    };
    write!(out, "{}", encode(&rows_document(&store, &result)?, format, XmlMode::Canonical)?)?;
    Ok(())
}

fn cmd_terms(registry: &RegistryArg, action: TermsAction, out: &mut dyn Write) -> Outcome {
    let reg = load_registry_arg(registry)?;
    match action {
        TermsAction::Resolve { terms } => {
            writeln!(out, "term\tcanonical\tlabel")?;
            for t in terms {
                let q: QualifiedName = t.parse()?;
                let canonical = reg.resolve(&q);
                let label = reg.definition(&canonical).map_or("", |d| d.label.as_str());
                writeln!(out, "{q}\t{canonical}\t{label}")?;
            }
        }
        TermsAction::List => {
            writeln!(out, "term\tdatatype\tlabel\tmaps_to")?;
            for d in reg.definitions() {
                writeln!(out, "{}\t{}\t{}\t", d.term, d.datatype, d.label)?;
            }
            for m in reg.mappings() {
                let datatype = reg.definition(&m.source).map_or("", |d| d.datatype.name());
                writeln!(out, "{}\t{datatype}\t\t{}", m.source, m.canonical)?;
            }
        }
    }
    Ok(())
}

fn cmd_mediate(
    federation: &Path,
    registry: &RegistryArg,
    strict: bool,
    format: MediateFormat,
    query: &str,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    let q = parse_query(query)?;
    let endpoints = load_federation(federation).map_err(Failure::usage)?;
    let reg = load_registry_arg(registry)?;
    let options = FederationOptions {
        strict,
        ..FederationOptions::default()
    };
    let result = runtime()?
        .block_on(federated_query(&endpoints, &reg, &q, options))
        .map_err(Failure::domain)?;
    match format {
        MediateFormat::Table => {
            writeln!(out, "endpoint\tsource\tid\tcategory\ttypes")?;
            for row in &result.rows {
                let category = row.record.category().map_or("relation", Category::name);
                writeln!(out, "{}\t{}\t{}\t{category}\t{}", row.endpoint, row.source, row.id, types_column(&row.record))?;
            }
        }
        MediateFormat::Json => {
            let rows: Vec<serde_json::Value> = result
                .rows
                .iter()
                .map(|r| serde_json::json!({"endpoint": r.endpoint, "source": r.source, "id": r.merged_id()}))
                .collect();
            let per_source: serde_json::Map<String, serde_json::Value> = result
                .per_source
                .iter()
                .map(|(tag, report)| {
                    let status = match &report.status {
                        EndpointStatus::Ok { rows } => serde_json::json!({"ok": rows}),
                        EndpointStatus::Error { kind, message } => {
                            serde_json::json!({"error": kind.name(), "message": message})
                        }
                    };
                    let conflicts: Vec<String> = report
                        .conflicts
                        .iter()
                        .map(|c| format!("{} {} expects {}", c.id, c.term, c.datatype))
                        .collect();
                    let value = serde_json::json!({
                        "status": status,
                        "elapsedMs": report.elapsed.as_millis() as u64,
                        "conflicts": conflicts,
                    });
                    (tag.clone(), value)
                })
                .collect();
            writeln!(out, "{}", serde_json::json!({"rows": rows, "perSource": per_source}))?;
            return Ok(());
        }
    }
    for (tag, report) in &result.per_source {
        let ms = report.elapsed.as_millis();
        match &report.status {
            EndpointStatus::Ok { rows } => writeln!(err, "{tag}: ok, {rows} rows, {ms} ms")?,
            EndpointStatus::Error { kind, message } => writeln!(err, "{tag}: {} error after {ms} ms: {message}", kind.name())?,
        }
        for c in &report.conflicts {
            writeln!(err, "{tag}: conflict: {} has {} value for {} ({})", c.id, c.value.kind_name(), c.term, c.datatype)?;
        }
    }
    Ok(())
}

fn cmd_probe(federation: Option<PathBuf>, url: Option<String>, deadline_ms: u64, out: &mut dyn Write) -> Outcome {
    let endpoints = match (federation, url) {
        (Some(path), None) => load_federation(path).map_err(Failure::usage)?,
        (None, Some(url)) => {
            vec![EndpointDescriptor::new("endpoint", url).with_deadline(Duration::from_millis(deadline_ms.max(1)))]
        }
        _ => return Err(Failure::usage("pass --federation or --url")),
    };
    let reports = runtime()?.block_on(async {
        let mut reports = Vec::new();
        for ep in &endpoints {
            reports.push(probe(ep).await);
        }
        reports
    });
    writeln!(out, "endpoint\tstatus\tlatency_ms\tformats\tcounts")?;
    for r in reports {
        let ms = r.elapsed.as_millis();
        match r.outcome {
            ProbeOutcome::Ok { formats, counts, .. } => {
                let counts: Vec<String> = counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
                writeln!(out, "{}\tok\t{ms}\t{}\t{}", r.tag, formats.join(","), counts.join(","))?;
            }
            ProbeOutcome::Unreachable { message } => writeln!(out, "{}\tunreachable\t{ms}\t\t{message}", r.tag)?,
            ProbeOutcome::DeadlineExceeded => writeln!(out, "{}\tdeadline-exceeded\t{ms}\t\t", r.tag)?,
            ProbeOutcome::BadResponse { message } => writeln!(out, "{}\tbad-response\t{ms}\t\t{message}", r.tag)?,
        }
    }
    Ok(())
}

/// Graphviz rendering: one node per identified record, one edge per relation.
pub fn to_dot(doc: &Document) -> String {
    let quote = |s: &str| format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""));
    let mut s = String::from("digraph provenance {\n");
    for record in doc.records() {
        let (Some(id), Some(category)) = (record.id(), record.category()) else {
            continue;
        };
        let shape = match category {
            Category::Entity => "ellipse",
            Category::Activity => "box",
            Category::Agent => "house",
        };
        s.push_str(&format!("  {} [shape={shape}];\n", quote(id)));
    }
    for rel in doc.relations() {
        s.push_str(&format!("  {} -> {} [label={}];\n", quote(&rel.subject), quote(&rel.object), quote(rel.kind.name())));
    }
    s.push_str("}\n");
    s
}
