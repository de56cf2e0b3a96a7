//! Test-side oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use nidm_core::model::{parse_decimal, Activity, Agent, Attribute, AttributeValue, Category, Document, Entity, QualifiedName, Record, Relation, RelationKind, Timestamp};
use nidm_core::query::{AttrFilter, Comparator, Direction, PathConstraint, Query, RecordFilter};
use nidm_core::terminology::{harmonize, Registry};
use proptest::prelude::*;
use proptest::sample::Index;
use rust_decimal::Decimal;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn load_provn(name: &str) -> Document {
    nidm_core::codecs::parse_provn(&read_fixture(name)).unwrap()
}

pub fn registry() -> Registry {
    Registry::parse(&read_fixture("registry.terms")).unwrap()
}

/// Non-comment, non-blank lines of the shared query corpus.
pub fn query_corpus() -> Vec<String> {
    read_fixture("queries.txt")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

// ---- closure ----------------------------------------------------------

/// Ids reachable from `start` by repeatedly following every relation from
/// subject to object (and plan), scanning the whole relation list each round.
pub fn closure_oracle(doc: &Document, start: &str) -> BTreeSet<String> {
    let mut set = BTreeSet::from([start.to_string()]);
    loop {
        let before = set.len();
        for rec in doc.records() {
            if let Record::Relation(r) = rec {
                if set.contains(&r.subject) {
                    for next in std::iter::once(&r.object).chain(r.plan.as_ref()) {
                        if doc.get(next).is_some() {
                            set.insert(next.clone());
                        }
                    }
                }
            }
        }
        if set.len() == before {
            return set;
        }
    }
}

// ---- brute-force query evaluation --------------------------------------

fn oracle_number(v: &AttributeValue) -> Option<Decimal> {
    match v {
        AttributeValue::Number(d) => Some(*d),
        AttributeValue::Text(t) => parse_decimal(t),
        _ => None,
    }
}

fn oracle_equal(a: &AttributeValue, b: &AttributeValue) -> bool {
    match (oracle_number(a), oracle_number(b)) {
        (Some(x), Some(y)) if matches!(a, AttributeValue::Number(_)) || matches!(b, AttributeValue::Number(_)) => {
            x == y
        }
        _ => match (a, b) {
            (AttributeValue::Term(x), AttributeValue::Term(y)) => x == y,
            (AttributeValue::Term(_), _) | (_, AttributeValue::Term(_)) => false,
            (AttributeValue::Number(_), _) | (_, AttributeValue::Number(_)) => false,
            _ => a.lexical() == b.lexical(),
        },
    }
}

fn oracle_attr(f: &AttrFilter, rec: &Record) -> bool {
    let values: Vec<&AttributeValue> = rec.attributes().iter().filter(|a| a.key == f.key).map(|a| &a.value).collect();
    match &f.test {
        None => !values.is_empty(),
        Some((Comparator::Eq, v)) => values.iter().any(|x| oracle_equal(x, v)),
        Some((Comparator::Ne, v)) => values.iter().all(|x| !oracle_equal(x, v)),
        Some((Comparator::Contains, v)) => values.iter().any(|x| x.lexical().contains(&v.lexical())),
        Some((cmp, v)) => {
            let bound = oracle_number(v).unwrap();
            values.iter().filter_map(|x| oracle_number(x)).any(|n| match cmp {
                Comparator::Lt => n < bound,
                Comparator::Le => n <= bound,
                Comparator::Gt => n > bound,
                Comparator::Ge => n >= bound,
                _ => unreachable!(),
            })
        }
    }
}

fn oracle_canonical(reg: &Registry, t: &QualifiedName) -> QualifiedName {
    let mut cur = t.clone();
    for _ in 0..64 {
        match reg.mappings().find(|m| m.source == cur) {
            Some(m) => cur = m.canonical,
            None => break,
        }
    }
    cur
}

fn oracle_filter(reg: &Registry, f: &RecordFilter, rec: &Record) -> bool {
    if let Some(c) = f.category {
        if rec.category() != Some(c) {
            return false;
        }
    }
    let types: Vec<QualifiedName> = rec.types().map(|t| oracle_canonical(reg, t)).collect();
    f.types.iter().all(|t| types.contains(&oracle_canonical(reg, t))) && f.attrs.iter().all(|a| oracle_attr(a, rec))
}

/// All ids one step away, found by scanning every relation.
fn oracle_step(doc: &Document, kind: RelationKind, dir: Direction, from: &str) -> Vec<String> {
    let forward_is_subject_to_object = kind != RelationKind::WasGeneratedBy;
    let s2o = (dir == Direction::Forward) == forward_is_subject_to_object;
    doc.relations()
        .filter(|r| r.kind == kind)
        .filter_map(|r| {
            if s2o && r.subject == from {
                Some(r.object.clone())
            } else if !s2o && r.object == from {
                Some(r.subject.clone())
            } else {
                None
            }
        })
        .collect()
}

fn oracle_path(doc: &Document, reg: &Registry, from: &str, path: &PathConstraint, depth: usize) -> bool {
    if depth == path.steps.len() {
        return doc.get(from).is_some_and(|r| oracle_filter(reg, &path.target, r));
    }
    let step = &path.steps[depth];
    oracle_step(doc, step.kind, step.direction, from).into_iter().any(|next| {
        doc.get(&next)
            .is_some_and(|r| oracle_filter(reg, &step.filter, r) && oracle_path(doc, reg, &next, path, depth + 1))
    })
}

/// Full scan of every record of every source.
pub fn brute_force(sources: &[(String, Document)], reg: &Registry, q: &Query) -> Vec<(String, String)> {
    let head = RecordFilter {
        category: Some(q.select),
        types: q.types.clone(),
        attrs: q.attrs.clone(),
    };
    let mut out = BTreeSet::new();
    for (tag, doc) in sources {
        let doc = harmonize(reg, doc);
        for rec in doc.records() {
            let Some(id) = rec.id() else { continue };
            if oracle_filter(reg, &head, rec) && q.paths.iter().all(|p| oracle_path(&doc, reg, id, p, 0)) {
                out.insert((tag.clone(), id.to_string()));
            }
        }
    }
    out.into_iter().collect()
}

// ---- isomorphism under relabeling ---------------------------------------

/// A relabeling-invariant fingerprint: ids are replaced by colours computed
/// from attributes and refined over the relation structure; timestamps and
/// relation ids are ignored.
pub fn canonical_form(doc: &Document) -> Vec<String> {
    let mut colour: HashMap<String, String> = HashMap::new();
    for rec in doc.records() {
        if let Some(id) = rec.id() {
            let mut attrs: Vec<String> = rec.attributes().iter().map(|a| format!("{}={:?}", a.key, a.value)).collect();
            attrs.sort();
            colour.insert(id.to_string(), format!("{:?}{attrs:?}", rec.category().unwrap()));
        }
    }
    let edges: Vec<(RelationKind, String, String, String)> = doc
        .relations()
        .map(|r| {
            let mut attrs: Vec<String> = r.attributes.iter().map(|a| format!("{}={:?}", a.key, a.value)).collect();
            attrs.sort();
            (r.kind, r.subject.clone(), r.object.clone(), format!("{attrs:?}{:?}", r.plan.is_some()))
        })
        .collect();
    for _ in 0..4 {
        let mut next = HashMap::new();
        for (id, c) in &colour {
            let mut out: Vec<String> = edges
                .iter()
                .filter(|e| &e.1 == id)
                .map(|e| format!(">{:?}{}{}", e.0, e.3, colour.get(&e.2).map_or("?", |s| s)))
                .collect();
            let mut inc: Vec<String> = edges
                .iter()
                .filter(|e| &e.2 == id)
                .map(|e| format!("<{:?}{}{}", e.0, e.3, colour.get(&e.1).map_or("?", |s| s)))
                .collect();
            out.sort();
            inc.sort();
            next.insert(id.clone(), format!("{c}|{out:?}|{inc:?}"));
        }
        colour = next;
    }
    let mut form: Vec<String> = colour.into_values().collect();
    form.extend(edges.iter().map(|e| format!("{:?} {} {} {}", e.0, colour_of(doc, &e.1), colour_of(doc, &e.2), e.3)));
    form.sort();
    form
}

fn colour_of(doc: &Document, id: &str) -> String {
    match doc.get(id) {
        Some(rec) => {
            let mut attrs: Vec<String> = rec.attributes().iter().map(|a| format!("{}={:?}", a.key, a.value)).collect();
            attrs.sort();
            format!("{attrs:?}")
        }
        None => "?".into(),
    }
}

// ---- random documents -------------------------------------------------

const KEYS: [&str; 8] = [
    "prov:label",
    "prov:value",
    "prov:location",
    "ex:size",
    "ex:note",
    "nidm:name",
    "nidm:url",
    "ex.sub:flag-2",
];

const TERMS: [&str; 6] = ["ex:A", "ex:b_2", "nidm:acquisition", "prov:Person", "ex.sub:x.y", "nidm:T-1"];

pub fn arb_value() -> impl Strategy<Value = AttributeValue> {
    prop_oneof![
        "[ -~éü\t\n]{0,12}".prop_map(AttributeValue::Text),
        (-1_000_000i64..1_000_000, 0u32..4).prop_map(|(m, s)| AttributeValue::Number(Decimal::new(m, s))),
        prop::sample::select(&TERMS[..]).prop_map(|t| AttributeValue::Term(t.parse().unwrap())),
        "http://ex\\.org/[a-z0-9/]{0,10}".prop_map(AttributeValue::Uri),
        "urn:[a-z]{1,5}".prop_map(AttributeValue::Uri),
        Just(AttributeValue::Text("http://looks.like/uri".into())),
        Just(AttributeValue::Text("2.50".into())),
    ]
}

pub fn arb_attributes(max: usize) -> impl Strategy<Value = Vec<Attribute>> {
    prop::collection::vec(
        (prop::sample::select(&KEYS[..]), arb_value())
            .prop_map(|(k, v)| Attribute::new(k.parse().unwrap(), v)),
        0..=max,
    )
}

fn arb_time() -> impl Strategy<Value = Timestamp> {
    (946_684_800i64..1_900_000_000).prop_map(|s| Timestamp::from_naive(chrono::DateTime::from_timestamp(s, 0).unwrap().naive_utc()))
}

#[derive(Clone, Debug)]
struct RelSpec {
    kind: usize,
    subject: Index,
    object: Index,
    plan: Option<Index>,
    time: Option<Timestamp>,
    with_id: bool,
    attributes: Vec<Attribute>,
}

fn arb_rel() -> impl Strategy<Value = RelSpec> {
    (
        0..RelationKind::ALL.len(),
        any::<Index>(),
        any::<Index>(),
        prop::option::of(any::<Index>()),
        prop::option::of(arb_time()),
        any::<bool>(),
        arb_attributes(2),
    )
        .prop_map(|(kind, subject, object, plan, time, with_id, attributes)| RelSpec {
            kind,
            subject,
            object,
            plan,
            time,
            with_id,
            attributes,
        })
}

/// Valid documents of at most 200 records, in shuffled order.
pub fn arb_document() -> impl Strategy<Value = Document> {
    let entities = prop::collection::vec((arb_attributes(3), any::<bool>()), 0..50);
    let activities = prop::collection::vec((arb_attributes(2), prop::option::of((arb_time(), 0i64..100_000, any::<bool>()))), 0..30);
    let agents = prop::collection::vec(arb_attributes(2), 0..20);
    let relations = prop::collection::vec(arb_rel(), 0..100);
    let extra_ns = any::<bool>();
    (entities, activities, agents, relations, extra_ns)
        .prop_flat_map(|(entities, activities, agents, relations, extra_ns)| {
            let mut records = Vec::new();
            let mut collections = Vec::new();
            for (i, (mut attrs, is_collection)) in entities.into_iter().enumerate() {
                let id = format!("e{i}");
                if is_collection {
                    attrs.insert(0, Attribute::prov_type(QualifiedName::prov("Collection")));
                    collections.push(id.clone());
                }
                records.push(Record::Entity(Entity::new(id, attrs)));
            }
            let entity_ids: Vec<String> = (0..records.len()).map(|i| format!("e{i}")).collect();
            let activity_ids: Vec<String> = (0..activities.len()).map(|i| format!("act.{i}")).collect();
            for (i, (attrs, times)) in activities.into_iter().enumerate() {
                let (start, end) = match times {
                    Some((s, d, both)) => (Some(s), both.then(|| s.plus_seconds(d))),
                    None => (None, None),
                };
                records.push(Record::Activity(Activity {
                    id: activity_ids[i].clone(),
                    start,
                    end,
                    attributes: attrs,
                }));
            }
            let agent_ids: Vec<String> = (0..agents.len()).map(|i| format!("ag_{i}")).collect();
            for (i, attrs) in agents.into_iter().enumerate() {
                records.push(Record::Agent(Agent::new(agent_ids[i].clone(), attrs)));
            }
            let pool = |c: Category| match c {
                Category::Entity => &entity_ids,
                Category::Activity => &activity_ids,
                Category::Agent => &agent_ids,
            };
            for (n, spec) in relations.into_iter().enumerate() {
                let kind = RelationKind::ALL[spec.kind];
                let (sc, oc) = kind.endpoints();
                let subjects = if kind == RelationKind::HadMember { &collections } else { pool(sc) };
                let objects = pool(oc);
                if subjects.is_empty() || objects.is_empty() {
                    continue;
                }
                let mut rel = Relation::new(kind, spec.subject.get(subjects).clone(), spec.object.get(objects).clone())
                    .with_attributes(spec.attributes);
                if spec.with_id {
                    rel.id = Some(format!("r{n}"));
                }
                if kind.allows_time() {
                    rel.time = spec.time;
                }
                if kind.allows_plan() && !entity_ids.is_empty() {
                    rel.plan = spec.plan.map(|p| p.get(&entity_ids).clone());
                }
                records.push(Record::Relation(rel));
            }
            let mut ns = BTreeMap::from([
                ("ex".to_string(), "http://example.org/ns#".to_string()),
                ("ex.sub".to_string(), "http://example.org/sub/".to_string()),
                ("nidm".to_string(), nidm_core::model::NIDM_NS.to_string()),
            ]);
            if extra_ns {
                ns.insert("unused".into(), "urn:unused:".into());
            }
            Just(records).prop_shuffle().prop_map(move |records| Document::new(ns.clone(), records).unwrap())
        })
}
