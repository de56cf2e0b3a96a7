//! Structural checks over a whole document.

use std::fmt;

use crate::model::{Category, Document, Record, Relation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationCode {
    DanglingRef,
    KindMismatch,
    NotACollection,
    BadInterval,
    UndeclaredPrefix,
}

impl ViolationCode {
    pub fn name(self) -> &'static str {
        match self {
            ViolationCode::DanglingRef => "DanglingRef",
            ViolationCode::KindMismatch => "KindMismatch",
            ViolationCode::NotACollection => "NotACollection",
            ViolationCode::BadInterval => "BadInterval",
            ViolationCode::UndeclaredPrefix => "UndeclaredPrefix",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Violation {
    /// Position of the offending record in the document.
    pub index: usize,
    pub code: ViolationCode,
    /// The identifier or prefix the violation is about.
    pub subject: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    pub fn codes(&self) -> Vec<ViolationCode> {
        self.violations.iter().map(|v| v.code).collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("no violations");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "record {}: {} ({})", v.index, v.code, v.message)?;
        }
        Ok(())
    }
}

pub fn validate(doc: &Document) -> ValidationReport {
    let mut out = Vec::new();
    for (index, record) in doc.records().iter().enumerate() {
        let mut push = |code, subject: &str, message: String| {
            out.push(Violation {
                index,
                code,
                subject: subject.to_string(),
                message,
            })
        };
        for name in record.qualified_names() {
            if !doc.declares(name.prefix()) {
                push(
                    ViolationCode::UndeclaredPrefix,
                    name.prefix(),
                    format!("prefix `{}` of `{name}` is not declared", name.prefix()),
                );
            }
        }
        match record {
            Record::Activity(a) => {
                if let (Some(start), Some(end)) = (a.start, a.end) {
                    if start > end {
                        push(
                            ViolationCode::BadInterval,
                            &a.id,
                            format!("activity `{}` ends ({end}) before it starts ({start})", a.id),
                        );
                    }
                }
            }
            Record::Relation(r) => check_relation(doc, r, &mut push),
            Record::Entity(_) | Record::Agent(_) => {}
        }
    }
    ValidationReport { violations: out }
}

fn check_relation(doc: &Document, r: &Relation, push: &mut impl FnMut(ViolationCode, &str, String)) {
    let (subject_cat, object_cat) = r.kind.endpoints();
    check_endpoint(doc, r, &r.subject, subject_cat, "subject", push);
    check_endpoint(doc, r, &r.object, object_cat, "object", push);

    if let Some(plan) = &r.plan {
        if r.kind.allows_plan() {
            check_endpoint(doc, r, plan, Category::Entity, "plan", push);
        } else {
            push(
                ViolationCode::KindMismatch,
                plan,
                format!("{} does not take a plan", r.kind),
            );
        }
    }
    if r.time.is_some() && !r.kind.allows_time() {
        push(
            ViolationCode::KindMismatch,
            &r.subject,
            format!("{} does not take a time", r.kind),
        );
    }
    if r.kind == crate::model::RelationKind::HadMember {
        if let Some(Record::Entity(e)) = doc.get(&r.subject) {
            if !e.is_collection() {
                push(
                    ViolationCode::NotACollection,
                    &e.id,
                    format!("hadMember subject `{}` is not typed prov:Collection", e.id),
                );
            }
        }
    }
}

fn check_endpoint(
    doc: &Document,
    r: &Relation,
    id: &str,
    expected: Category,
    role: &str,
    push: &mut impl FnMut(ViolationCode, &str, String),
) {
    match doc.get(id).and_then(Record::category) {
        None => push(
            ViolationCode::DanglingRef,
            id,
            format!("{} {role} `{id}` does not resolve", r.kind),
        ),
        Some(found) if found != expected => push(
            ViolationCode::KindMismatch,
            id,
            format!("{} {role} `{id}` is an {found}, expected an {expected}", r.kind),
        ),
        Some(_) => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;
    use std::collections::BTreeMap;

    fn q(s: &str) -> QualifiedName {
        s.parse().unwrap()
    }

    fn doc(records: Vec<Record>) -> Document {
        let ns = [("hid".to_string(), "http://hid/".to_string())].into_iter().collect::<BTreeMap<_, _>>();
        Document::new(ns, records).unwrap()
    }

    #[test]
    fn had_member_needs_collection() {
        let d = doc(vec![
            Record::Entity(Entity::new("x_1", vec![])),
            Record::Entity(Entity::new("v_1", vec![])),
            Record::Relation(Relation::new(RelationKind::HadMember, "x_1", "v_1")),
        ]);
        assert_eq!(validate(&d).codes(), vec![ViolationCode::NotACollection]);
    }

    #[test]
    fn dangling_reference() {
        let d = doc(vec![
            Record::Entity(Entity::new("value_1", vec![])),
            Record::Relation(Relation::new(RelationKind::WasGeneratedBy, "value_1", "missing_act")),
        ]);
        let report = validate(&d);
        assert_eq!(report.codes(), vec![ViolationCode::DanglingRef]);
        assert_eq!(report.violations[0].subject, "missing_act");
        assert_eq!(report.violations[0].index, 1);
    }

    #[test]
    fn kind_mismatch_and_interval() {
        let t0 = Timestamp::parse("2001-01-01T00:15:00").unwrap();
        let t1 = Timestamp::parse("2001-01-01T00:00:00").unwrap();
        let d = doc(vec![
            Record::Activity(Activity {
                id: "a".into(),
                start: Some(t0),
                end: Some(t1),
                attributes: vec![],
            }),
            Record::Agent(Agent::new("p", vec![])),
            Record::Relation(Relation::new(RelationKind::WasGeneratedBy, "p", "a")),
            Record::Relation(Relation::new(RelationKind::HadMember, "a", "p").with_time(t0)),
        ]);
        let codes = validate(&d).codes();
        assert_eq!(
            codes,
            vec![
                ViolationCode::BadInterval,
                ViolationCode::KindMismatch,
                ViolationCode::KindMismatch,
                ViolationCode::KindMismatch,
                ViolationCode::KindMismatch,
            ]
        );
    }

    #[test]
    fn plan_only_on_association() {
        let d = doc(vec![
            Record::Activity(Activity { id: "a".into(), start: None, end: None, attributes: vec![] }),
            Record::Agent(Agent::new("p", vec![])),
            Record::Entity(Entity::new("plan", vec![])),
            Record::Relation(Relation::new(RelationKind::WasAssociatedWith, "a", "p").with_plan("plan")),
            Record::Relation(Relation::new(RelationKind::WasAssociatedWith, "a", "p").with_plan("nope")),
        ]);
        let report = validate(&d);
        assert_eq!(report.codes(), vec![ViolationCode::DanglingRef]);
        assert_eq!(report.violations[0].index, 4);
    }

    #[test]
    fn undeclared_prefix() {
        let d = doc(vec![Record::Entity(Entity::new(
            "e",
            vec![Attribute::prov_type(q("xnat:mprage")), Attribute::prov_type(q("hid:spgr"))],
        ))]);
        let report = validate(&d);
        assert_eq!(report.codes(), vec![ViolationCode::UndeclaredPrefix]);
        assert_eq!(report.violations[0].subject, "xnat");
    }
}
