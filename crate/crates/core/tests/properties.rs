mod common;

use common::*;
use nidm_core::model::QualifiedName;
use nidm_core::{harmonize, provenance_closure, validate};
use proptest::prelude::*;

fn mapped_doc() -> impl Strategy<Value = nidm_core::Document> {
    // random documents retyped with terms the fixture registry knows
    (arb_document(), prop::collection::vec(prop::sample::select(&[
        "hid:spgr", "xnat:mprage", "xnata:Handedness", "neurolex:T1", "hid:tr", "fs:recon_all",
    ][..]), 0..40))
        .prop_map(|(doc, terms)| {
            let (mut ns, mut records) = doc.into_parts();
            for (p, u) in registry().namespaces() {
                ns.insert(p.clone(), u.clone());
            }
            for (rec, t) in records.iter_mut().zip(terms) {
                rec.attributes_mut().push(nidm_core::Attribute::prov_type(t.parse().unwrap()));
            }
            nidm_core::Document::new(ns, records).unwrap()
        })
}

proptest! {
    #[test]
    fn closure_is_idempotent(doc in arb_document(), pick in any::<prop::sample::Index>()) {
        let ids: Vec<String> = doc.entities().map(|e| e.id.clone()).collect();
        prop_assume!(!ids.is_empty());
        let id = pick.get(&ids);
        let once = provenance_closure(&doc, id).unwrap();
        prop_assert!(validate(&once).is_valid());
        let twice = provenance_closure(&once, id).unwrap();
        prop_assert_eq!(&once, &twice);
        let got: std::collections::BTreeSet<String> = once.records().iter().filter_map(|r| r.id().map(str::to_string)).collect();
        prop_assert_eq!(got, closure_oracle(&doc, id));
    }

    #[test]
    fn harmonize_is_idempotent_and_additive(doc in mapped_doc()) {
        let reg = registry();
        let once = harmonize(&reg, &doc);
        prop_assert!(validate(&once).is_valid());
        prop_assert_eq!(&harmonize(&reg, &once), &once);
        prop_assert_eq!(once.len(), doc.len());
        for (before, after) in doc.records().iter().zip(once.records()) {
            prop_assert_eq!(before.attributes(), &after.attributes()[..before.attributes().len()]);
            for t in before.types() {
                let canonical = reg.resolve(t);
                prop_assert!(after.types().any(|x| *x == canonical));
            }
        }
    }

    #[test]
    fn resolve_is_idempotent(local in "[A-Za-z_]{1,8}", prefix in prop::sample::select(&["hid", "xnat", "xnata", "neurolex", "fs", "other"][..])) {
        let reg = registry();
        let t = QualifiedName::new(prefix, local).unwrap();
        let once = reg.resolve(&t);
        prop_assert_eq!(reg.resolve(&once), once);
    }
}

#[test]
fn resolve_is_idempotent_on_every_registry_term() {
    let reg = registry();
    for m in reg.mappings() {
        let r = reg.resolve(&m.source);
        assert_eq!(reg.resolve(&r), r);
        assert!(reg.definition(&r).is_some());
    }
}
