//! Python module `nidm`.

use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nidm_core::codecs::{self, Format, XmlMode};
use nidm_core::{HarmonizeOptions, NidmError as CoreError};

create_exception!(nidm, NidmError, PyException);

fn err(e: CoreError) -> PyErr {
    NidmError::new_err(format!("{}: {e}", e.code()))
}

fn format_of(name: &str) -> PyResult<Format> {
    Format::from_name(name).ok_or_else(|| PyValueError::new_err(format!("unknown format `{name}`")))
}

/// An immutable provenance document.
#[pyclass(frozen, module = "nidm")]
struct Document {
    inner: nidm_core::Document,
}

#[pymethods]
impl Document {
    /// Parses `text`; the format is guessed from the content when omitted.
    #[staticmethod]
    #[pyo3(signature = (text, format=None))]
    fn parse(text: &str, format: Option<&str>) -> PyResult<Self> {
        let format = match format {
            Some(f) => format_of(f)?,
            None => Format::sniff(text),
        };
        let inner = codecs::parse(format, text).map_err(err)?;
        Ok(Document { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = nidm_core::read_document(path).map_err(err)?;
        Ok(Document { inner })
    }

    /// `format` is provn, xml or json; `xml_mode` is canonical or spm-legacy.
    #[pyo3(signature = (format="provn", xml_mode="canonical"))]
    fn serialize(&self, format: &str, xml_mode: &str) -> PyResult<String> {
        let mode = XmlMode::from_name(xml_mode).ok_or_else(|| PyValueError::new_err(format!("unknown xml mode `{xml_mode}`")))?;
        match format_of(format)? {
            Format::Xml => codecs::serialize_xml(&self.inner, mode),
            other => codecs::serialize(other, &self.inner),
        }
        .map_err(err)
    }

    /// Violations as dicts with index, code, subject and message.
    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        nidm_core::validate(&self.inner)
            .violations
            .iter()
            .map(|v| {
                let d = PyDict::new(py);
                d.set_item("index", v.index)?;
                d.set_item("code", v.code.name())?;
                d.set_item("subject", &v.subject)?;
                d.set_item("message", &v.message)?;
                Ok(d)
            })
            .collect()
    }

    fn is_valid(&self) -> bool {
        nidm_core::validate(&self.inner).is_valid()
    }

    /// Identifiers of entities, activities and agents in document order.
    fn ids(&self) -> Vec<String> {
        self.inner.records().iter().filter_map(|r| r.id().map(str::to_string)).collect()
    }

    fn namespaces(&self) -> Vec<(String, String)> {
        self.inner.namespaces().iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }

    /// Record counts by category and relation kind.
    fn counts<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        d.set_item("entities", self.inner.entities().count())?;
        d.set_item("activities", self.inner.activities().count())?;
        d.set_item("agents", self.inner.agents().count())?;
        for kind in nidm_core::model::RelationKind::ALL {
            d.set_item(kind.name(), self.inner.relations().filter(|r| r.kind == kind).count())?;
        }
        Ok(d)
    }

    fn closure(&self, entity_id: &str) -> PyResult<Document> {
        let inner = nidm_core::provenance_closure(&self.inner, entity_id).map_err(err)?;
        Ok(Document { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __eq__(&self, other: &Document) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("<nidm.Document with {} records>", self.inner.len())
    }
}

/// Namespaces, term definitions and term mappings.
#[pyclass(frozen, module = "nidm")]
struct Registry {
    inner: Arc<nidm_core::Registry>,
}

#[pymethods]
impl Registry {
    #[new]
    #[pyo3(signature = (text=""))]
    fn new(text: &str) -> PyResult<Self> {
        let inner = nidm_core::Registry::parse(text).map_err(err)?;
        Ok(Registry { inner: Arc::new(inner) })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = nidm_core::load_registry(path).map_err(err)?;
        Ok(Registry { inner: Arc::new(inner) })
    }

    fn resolve(&self, term: &str) -> PyResult<String> {
        let q = term.parse().map_err(err)?;
        Ok(self.inner.resolve(&q).to_string())
    }

    fn equivalents(&self, term: &str) -> PyResult<Vec<String>> {
        let q = term.parse().map_err(err)?;
        Ok(self.inner.equivalents(&q).iter().map(ToString::to_string).collect())
    }

    fn mappings(&self) -> Vec<(String, String)> {
        self.inner.mappings().map(|m| (m.source.to_string(), m.canonical.to_string())).collect()
    }

    /// Appends canonical types (and roles when asked) to a document.
    #[pyo3(signature = (doc, roles=false))]
    fn harmonize(&self, doc: &Document, roles: bool) -> Document {
        Document {
            inner: nidm_core::harmonize_with(&self.inner, &doc.inner, HarmonizeOptions { roles }),
        }
    }
}

/// Queryable collection of documents keyed by source tag.
#[pyclass(frozen, module = "nidm")]
struct Store {
    inner: nidm_core::Store,
}

#[pymethods]
impl Store {
    #[new]
    #[pyo3(signature = (registry=None))]
    fn new(registry: Option<&Registry>) -> Self {
        let reg = registry.map_or_else(|| Arc::new(nidm_core::Registry::empty()), |r| r.inner.clone());
        Store {
            inner: nidm_core::Store::new(reg),
        }
    }

    fn ingest<'py>(&self, py: Python<'py>, source: &str, doc: &Document) -> PyResult<Bound<'py, PyDict>> {
        let s = self.inner.ingest(source, &doc.inner).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("source", s.source)?;
        d.set_item("records", s.records)?;
        d.set_item("entities", s.entities)?;
        d.set_item("plans", s.plans)?;
        d.set_item("collections", s.collections)?;
        d.set_item("values", s.values)?;
        d.set_item("activities", s.activities)?;
        d.set_item("agents", s.agents)?;
        d.set_item("relations", s.relations)?;
        Ok(d)
    }

    fn remove(&self, source: &str) -> bool {
        self.inner.remove(source)
    }

    /// Matching (source, id) pairs, sorted.
    fn query(&self, text: &str) -> PyResult<Vec<(String, String)>> {
        let q = nidm_core::parse_query(text).map_err(err)?;
        Ok(self.inner.run_query(&q).map_err(err)?.keys())
    }

    /// Member ids of a collection.
    #[pyo3(signature = (collection, source=None))]
    fn members(&self, collection: &str, source: Option<&str>) -> PyResult<Vec<(String, String)>> {
        Ok(self.inner.members(source, collection).map_err(err)?.keys())
    }

    fn sources(&self) -> Vec<String> {
        self.inner.snapshot().sources().map(|(tag, _)| tag.to_string()).collect()
    }
}

/// Normalized text of a query, or an error naming the column.
#[pyfunction]
fn parse_query(text: &str) -> PyResult<String> {
    Ok(nidm_core::parse_query(text).map_err(err)?.to_string())
}

#[pyfunction]
fn extract_spm_batch(log: &str) -> PyResult<Document> {
    let inner = nidm_core::extract_spm_batch(log).map_err(err)?;
    Ok(Document { inner })
}

/// Returns the document and the number of unmatched lines.
#[pyfunction]
fn extract_with_rules(log: &str, rules: &str) -> PyResult<(Document, usize)> {
    let rules = nidm_core::RuleSet::parse(rules).map_err(err)?;
    let outcome = nidm_core::extract_with_rules(log, &rules).map_err(err)?;
    Ok((Document { inner: outcome.document }, outcome.unmatched_lines))
}

/// Steps of an extracted workflow as text lines.
#[pyfunction]
fn replay_plan(doc: &Document) -> PyResult<Vec<String>> {
    Ok(nidm_core::replay_plan(&doc.inner).map_err(err)?.iter().map(ToString::to_string).collect())
}

#[pyfunction]
fn regenerate_log(doc: &Document) -> PyResult<String> {
    let plan = nidm_core::replay_plan(&doc.inner).map_err(err)?;
    Ok(nidm_core::regenerate_log(&plan))
}

#[pymodule]
fn nidm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NidmError", m.py().get_type::<NidmError>())?;
    m.add_class::<Document>()?;
    m.add_class::<Registry>()?;
    m.add_class::<Store>()?;
    m.add_function(wrap_pyfunction!(parse_query, m)?)?;
    m.add_function(wrap_pyfunction!(extract_spm_batch, m)?)?;
    m.add_function(wrap_pyfunction!(extract_with_rules, m)?)?;
    m.add_function(wrap_pyfunction!(replay_plan, m)?)?;
    m.add_function(wrap_pyfunction!(regenerate_log, m)?)?;
    Ok(())
}
