//! Conjunctive queries over harmonized records.
//!
//! ```text
//! select entity where type=neurolex:T1 and attr[prov:value]>6000
//!     and path(wasGeneratedBy.backward -> activity[type=fs:FreeSurfer])
//! ```
//!
//! Path steps walk relations. `forward` goes from a relation's subject to
//! its object for every kind except `wasGeneratedBy`, where the direction is
//! flipped so that `backward` leads from an entity to the activity that
//! generated it:
//!
//! ```text
//! used            activity --forward--> input entity
//! wasGeneratedBy  entity   --backward-> generating activity
//! hadMember       collection --forward--> member
//! ```

use std::fmt;

use crate::error::{NidmError, Result};
use crate::model::{Attribute, AttributeValue, Category, QualifiedName, Record, RelationKind};
use crate::terminology::Registry;

mod parse;

pub use parse::{parse_literal, parse_query};

pub const DEFAULT_MAX_PATH: usize = 8;
pub const DEFAULT_MAX_ROWS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Comparator {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Contains,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Ne => "!=",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::Contains => " contains ",
        }
    }

    pub fn is_ordering(self) -> bool {
        matches!(self, Comparator::Lt | Comparator::Le | Comparator::Gt | Comparator::Ge)
    }
}

/// `attr[key] <cmp> value`, or `attr[key]` alone for presence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttrFilter {
    pub key: QualifiedName,
    pub test: Option<(Comparator, AttributeValue)>,
}

impl AttrFilter {
    pub fn exists(key: QualifiedName) -> Self {
        AttrFilter { key, test: None }
    }

    pub fn new(key: QualifiedName, comparator: Comparator, value: AttributeValue) -> Self {
        AttrFilter {
            key,
            test: Some((comparator, value)),
        }
    }

    fn check(&self) -> Result<()> {
        if let Some((cmp, value)) = &self.test {
            if cmp.is_ordering() && !matches!(value, AttributeValue::Number(_)) {
                return Err(NidmError::BadQuery(format!(
                    "`{}` compares attr[{}] against {} value `{}`; ordering needs a number",
                    cmp.symbol(),
                    self.key,
                    value.kind_name(),
                    value.lexical()
                )));
            }
        }
        Ok(())
    }

    pub fn matches(&self, attributes: &[Attribute]) -> bool {
        let mut values = attributes.iter().filter(|a| a.key == self.key).map(|a| &a.value);
        let Some((cmp, expected)) = &self.test else {
            return values.next().is_some();
        };
        match cmp {
            Comparator::Eq => values.any(|v| v.loosely_equals(expected)),
            Comparator::Ne => !values.any(|v| v.loosely_equals(expected)),
            Comparator::Contains => {
                let needle = expected.lexical();
                values.any(|v| v.lexical().contains(&needle))
            }
            ordering => {
                let Some(bound) = expected.as_number() else {
                    return false;
                };
                values.filter_map(AttributeValue::as_number).any(|n| match ordering {
                    Comparator::Lt => n < bound,
                    Comparator::Le => n <= bound,
                    Comparator::Gt => n > bound,
                    Comparator::Ge => n >= bound,
                    _ => unreachable!(),
                })
            }
        }
    }
}

/// Category, type and attribute conditions on a single record.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RecordFilter {
    pub category: Option<Category>,
    pub types: Vec<QualifiedName>,
    pub attrs: Vec<AttrFilter>,
}

impl RecordFilter {
    pub fn is_empty(&self) -> bool {
        self.category.is_none() && self.types.is_empty() && self.attrs.is_empty()
    }

    /// Type filters compare canonical forms, so a filter written with a
    /// source term still finds records typed with its canonical term.
    pub fn matches(&self, reg: &Registry, record: &Record) -> bool {
        if let Some(cat) = self.category {
            if record.category() != Some(cat) {
                return false;
            }
        }
        self.types.iter().all(|wanted| {
            let wanted = reg.resolve(wanted);
            record.types().any(|t| reg.resolve(t) == wanted)
        }) && self.attrs.iter().all(|f| f.matches(record.attributes()))
    }

    fn fmt_conditions(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for t in &self.types {
            if !first {
                f.write_str(" and ")?;
            }
            first = false;
            write!(f, "type={t}")?;
        }
        for a in &self.attrs {
            if !first {
                f.write_str(" and ")?;
            }
            first = false;
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }

    /// True when this step walks a relation from its subject to its object.
    pub fn subject_to_object(self, kind: RelationKind) -> bool {
        match kind {
            RelationKind::WasGeneratedBy => self == Direction::Backward,
            _ => self == Direction::Forward,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathStep {
    pub kind: RelationKind,
    pub direction: Direction,
    /// Condition on the record reached by this step.
    pub filter: RecordFilter,
}

impl PathStep {
    pub fn new(kind: RelationKind, direction: Direction) -> Self {
        PathStep {
            kind,
            direction,
            filter: RecordFilter::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathConstraint {
    pub steps: Vec<PathStep>,
    pub target: RecordFilter,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub select: Category,
    pub types: Vec<QualifiedName>,
    pub attrs: Vec<AttrFilter>,
    pub paths: Vec<PathConstraint>,
}

impl Query {
    pub fn select(category: Category) -> Self {
        Query {
            select: category,
            types: Vec::new(),
            attrs: Vec::new(),
            paths: Vec::new(),
        }
    }

    pub fn with_type(mut self, t: QualifiedName) -> Self {
        self.types.push(t);
        self
    }

    pub fn with_attr(mut self, a: AttrFilter) -> Self {
        self.attrs.push(a);
        self
    }

    pub fn with_path(mut self, p: PathConstraint) -> Self {
        self.paths.push(p);
        self
    }

    /// The selected record's own conditions.
    pub fn head(&self) -> RecordFilter {
        RecordFilter {
            category: Some(self.select),
            types: self.types.clone(),
            attrs: self.attrs.clone(),
        }
    }

    /// Checks comparator operands and path lengths.
    pub fn check(&self, max_path: usize) -> Result<()> {
        let filters = std::iter::once(&self.attrs).chain(self.paths.iter().flat_map(|p| {
            p.steps.iter().map(|s| &s.filter.attrs).chain(std::iter::once(&p.target.attrs))
        }));
        for list in filters {
            for a in list {
                a.check()?;
            }
        }
        for p in &self.paths {
            if p.steps.is_empty() || p.steps.len() > max_path {
                return Err(NidmError::BadQuery(format!(
                    "path has {} steps; allowed 1 to {max_path}",
                    p.steps.len()
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for AttrFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "attr[{}]", self.key)?;
        if let Some((cmp, value)) = &self.test {
            f.write_str(cmp.symbol())?;
            write_value(f, value)?;
        }
        Ok(())
    }
}

fn write_value(f: &mut fmt::Formatter<'_>, value: &AttributeValue) -> fmt::Result {
    match value {
        AttributeValue::Number(d) => write!(f, "{d}"),
        AttributeValue::Term(q) => write!(f, "{q}"),
        AttributeValue::Uri(u) => write!(f, "<{u}>"),
        AttributeValue::Text(t) => {
            f.write_str("\"")?;
            for c in t.chars() {
                match c {
                    '"' => f.write_str("\\\"")?,
                    '\\' => f.write_str("\\\\")?,
                    '\n' => f.write_str("\\n")?,
                    other => write!(f, "{other}")?,
                }
            }
            f.write_str("\"")
        }
    }
}

impl fmt::Display for PathConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("path(")?;
        for (i, step) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(" -> ")?;
            }
            write!(f, "{}.{}", step.kind, step.direction.name())?;
            if !step.filter.is_empty() {
                f.write_str("[")?;
                step.filter.fmt_conditions(f)?;
                f.write_str("]")?;
            }
        }
        if !self.target.is_empty() {
            let cat = self.target.category.map_or("any", Category::name);
            write!(f, " -> {cat}")?;
            if !self.target.types.is_empty() || !self.target.attrs.is_empty() {
                f.write_str("[")?;
                self.target.fmt_conditions(f)?;
                f.write_str("]")?;
            }
        }
        f.write_str(")")
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "select {}", self.select)?;
        let mut first = true;
        let mut sep = |f: &mut fmt::Formatter<'_>| {
            let s = if first { " where " } else { " and " };
            first = false;
            f.write_str(s)
        };
        for t in &self.types {
            sep(f)?;
            write!(f, "type={t}")?;
        }
        for a in &self.attrs {
            sep(f)?;
            write!(f, "{a}")?;
        }
        for p in &self.paths {
            sep(f)?;
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for Query {
    type Err = NidmError;

    fn from_str(s: &str) -> Result<Self> {
        parse_query(s)
    }
}

/// One matching record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResultRow {
    pub source: String,
    pub id: String,
    pub record: Record,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ResultSet {
    /// Sorted by (source, id); at most the store's row cap.
    pub rows: Vec<ResultRow>,
    /// Number of matches before truncation.
    pub total: usize,
}

impl ResultSet {
    pub fn keys(&self) -> Vec<(String, String)> {
        self.rows.iter().map(|r| (r.source.clone(), r.id.clone())).collect()
    }
}
