//! Provenance-centred metadata for derived neuroimaging data.
//!
//! The crate covers the record model and its validation, PROV-N / XML / JSON
//! codecs, a terminology registry for harmonizing source-specific terms, an
//! in-memory query store, and extractors that turn analysis logs into
//! provenance documents.

pub mod closure;
pub mod codecs;
pub mod error;
pub mod extract;
pub mod files;
pub mod model;
pub mod query;
pub mod store;
pub mod terminology;
pub mod validate;

pub use closure::provenance_closure;
pub use error::{NidmError, Result};
pub use extract::{extract_spm_batch, extract_with_rules, regenerate_log, replay_plan, ExtractionOutcome, PlanStep, RuleSet};
pub use model::{
    build_document, Activity, Agent, Attribute, AttributeValue, Category, Document, Entity, QualifiedName, Record,
    Relation, RelationKind, Timestamp,
};
pub use files::{read_document, store_sources};
pub use query::{parse_literal, parse_query, AttrFilter, Comparator, Direction, PathConstraint, PathStep, Query, RecordFilter, ResultRow, ResultSet};
pub use store::{IngestSummary, QueryLimits, Snapshot, Store};
pub use terminology::{harmonize, harmonize_with, load_registry, Datatype, HarmonizeOptions, Registry, TermDefinition, TermMapping};
pub use validate::{validate, ValidationReport, Violation, ViolationCode};
