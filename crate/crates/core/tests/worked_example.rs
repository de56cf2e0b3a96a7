mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use common::*;
use nidm_core::model::{Category, QualifiedName, Record, RelationKind};
use nidm_core::{harmonize, provenance_closure, validate, NidmError, Store};

fn tally(doc: &nidm_core::Document) -> (usize, usize, usize, usize, usize, usize, usize, usize) {
    let has_type = |r: &Record, t: &str| r.types().any(|x| x.to_string() == t);
    let entities: Vec<&Record> = doc.records().iter().filter(|r| r.category() == Some(Category::Entity)).collect();
    let plans = entities.iter().filter(|r| has_type(r, "prov:Plan")).count();
    let collections = entities.iter().filter(|r| has_type(r, "prov:Collection")).count();
    let kind = |k: RelationKind| doc.relations().filter(|r| r.kind == k).count();
    (
        plans,
        entities.len() - plans - collections,
        collections,
        doc.activities().count(),
        doc.agents().count(),
        kind(RelationKind::WasAssociatedWith),
        kind(RelationKind::HadMember),
        kind(RelationKind::WasGeneratedBy),
    )
}

/// Counts taken from the fixture text itself, one statement per line start.
fn text_tally(name: &str) -> (usize, usize, usize, usize, usize, usize, usize, usize) {
    let text = read_fixture(name);
    let starts = |kw: &str| text.lines().filter(|l| l.starts_with(&format!("{kw}("))).count();
    let entity_blocks: Vec<&str> = text.split("\n\n").filter(|b| b.trim_start().starts_with("entity(")).collect();
    let plans = entity_blocks.iter().filter(|b| b.contains("'prov:Plan'")).count();
    let collections = entity_blocks.iter().filter(|b| b.contains("'prov:Collection'")).count();
    (
        plans,
        starts("entity") - plans - collections,
        collections,
        starts("activity"),
        starts("agent"),
        starts("wasAssociatedWith"),
        starts("hadMember"),
        starts("wasGeneratedBy"),
    )
}

#[test]
fn golden_tallies() {
    let doc = load_provn("worked-example.provn");
    assert!(validate(&doc).is_valid(), "{}", validate(&doc));
    assert_eq!(tally(&doc), (2, 6, 2, 4, 4, 8, 4, 4));
    assert_eq!(tally(&doc), text_tally("worked-example.provn"));
    assert_eq!(doc.len(), 34);
}

#[test]
fn halves_cover_the_whole() {
    let whole = load_provn("worked-example.provn");
    let hid = load_provn("hid.provn");
    let xnat = load_provn("xnat.provn");
    assert!(validate(&hid).is_valid());
    assert!(validate(&xnat).is_valid());
    assert_eq!(tally(&hid), text_tally("hid.provn"));
    assert_eq!(tally(&xnat), text_tally("xnat.provn"));
    assert_eq!(hid.len() + xnat.len(), whole.len());
    for half in [&hid, &xnat] {
        for rec in half.records() {
            assert!(whole.records().contains(rec), "{rec:?}");
        }
    }
}

#[test]
fn closures_match_fixpoint_oracle() {
    let doc = load_provn("worked-example.provn");
    let ids: Vec<String> = doc.entities().map(|e| e.id.clone()).collect();
    for id in &ids {
        let closure = provenance_closure(&doc, id).unwrap();
        let got: BTreeSet<String> = closure.records().iter().filter_map(|r| r.id().map(str::to_string)).collect();
        assert_eq!(got, closure_oracle(&doc, id), "{id}");
        assert!(validate(&closure).is_valid());
    }
    let c1 = provenance_closure(&doc, "collection_1").unwrap();
    let ids: BTreeSet<&str> = c1.records().iter().filter_map(Record::id).collect();
    assert_eq!(
        ids,
        BTreeSet::from(["collection_1", "value_3", "value_4", "acquisition_3", "person_1", "person_2"])
    );
    let v1 = provenance_closure(&doc, "value_1").unwrap();
    let ids: BTreeSet<&str> = v1.records().iter().filter_map(Record::id).collect();
    assert_eq!(ids, BTreeSet::from(["value_1", "acquisition_1", "person_1", "person_2", "plan_1"]));
    assert!(matches!(provenance_closure(&doc, "person_1"), Err(NidmError::UnknownId(_))));
    assert!(matches!(provenance_closure(&doc, "nobody"), Err(NidmError::UnknownId(_))));
}

#[test]
fn registry_fixture() {
    let reg = registry();
    assert!(reg.mapping_count() >= 8);
    let q = |s: &str| s.parse::<QualifiedName>().unwrap();
    assert_eq!(reg.resolve(&q("hid:Edinburgh_Handedness")), q("neurolex:Handedness"));
    assert_eq!(reg.resolve(&q("xnat:mprage")), q("neurolex:T1"));
    assert_eq!(reg.resolve(&q("unknown:thing")), q("unknown:thing"));
    assert_eq!(reg.definition(&q("neurolex:Repetition_Time")).unwrap().datatype.name(), "decimal");
}

#[test]
fn harmonized_halves_agree_on_canonical_types() {
    let reg = registry();
    let hid = harmonize(&reg, &load_provn("hid.provn"));
    let xnat = harmonize(&reg, &load_provn("xnat.provn"));
    assert!(validate(&hid).is_valid());
    assert!(validate(&xnat).is_valid());
    let canon = |doc: &nidm_core::Document, id: &str| -> BTreeSet<String> {
        doc.get(id)
            .unwrap()
            .types()
            .map(|t| reg.resolve(t).to_string())
            .collect()
    };
    assert_eq!(canon(&hid, "value_1"), canon(&xnat, "value_2"));
    assert_eq!(canon(&hid, "collection_1"), canon(&xnat, "collection_2"));
}

#[test]
fn ingest_and_harmonized_queries() {
    let store = Store::new(Arc::new(registry()));
    let hid = store.ingest("hid", &load_provn("hid.provn")).unwrap();
    assert_eq!((hid.values, hid.collections, hid.activities, hid.plans), (3, 1, 2, 1));
    let xnat = store.ingest("xnat", &load_provn("xnat.provn")).unwrap();
    assert_eq!((xnat.values, xnat.collections, xnat.activities), (3, 1, 2));

    let handed = store
        .run_query(&"select entity where type=neurolex:Handedness and attr[prov:value]=neurolex:right_handed".parse().unwrap())
        .unwrap();
    assert_eq!(handed.keys(), [("hid".into(), "value_1".into()), ("xnat".into(), "value_2".into())]);

    let collections = store
        .run_query(&"select entity where type=neurolex:T1 and path(hadMember.forward -> entity[attr[prov:value]])".parse().unwrap())
        .unwrap();
    assert_eq!(collections.keys(), [("hid".into(), "collection_1".into()), ("xnat".into(), "collection_2".into())]);

    let members = |src: &str, id: &str| -> Vec<String> {
        store.members(Some(src), id).unwrap().rows.into_iter().map(|r| r.id).collect()
    };
    assert_eq!(members("hid", "collection_1"), ["value_3", "value_4"]);
    assert_eq!(members("xnat", "collection_2"), ["value_5", "value_6"]);
    assert!(matches!(store.members(None, "value_1"), Err(NidmError::NotACollection(_))));
}

#[test]
fn ingesting_the_same_document_twice_is_stable() {
    let store = Store::new(Arc::new(registry()));
    let doc = load_provn("worked-example.provn");
    let a = store.ingest("w", &doc).unwrap();
    let first = store.run_query(&"select entity".parse().unwrap()).unwrap();
    let b = store.ingest("w", &doc).unwrap();
    assert_eq!(a, b);
    assert_eq!(store.run_query(&"select entity".parse().unwrap()).unwrap(), first);
}
