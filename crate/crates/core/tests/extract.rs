mod common;

use common::*;
use nidm_core::codecs::{serialize_xml, XmlMode};
use nidm_core::model::Category;
use nidm_core::{
    extract_spm_batch, extract_with_rules, provenance_closure, regenerate_log, replay_plan, validate, NidmError, RuleSet,
};
use proptest::prelude::*;

pub const FIG4_BLOCKS: [&str; 3] = [
    r#"<prov:activity prov:id="a_1">
  <prov:startTime>07-Jun-2012 14:06:39</prov:startTime>
  <prov:endTime>07-Jun-2012 14:09:00</prov:endTime>
  <prov:label>matlabbatch{2}.spm.temporal.st</prov:label>
</prov:activity>"#,
    r#"<prov:entity prov:id="e_30">
  <prov:type xsi:type="xsd:string">parameter</prov:type>
  <ni:name xsi:type="xsd:string">par: tr</ni:name>
  <ni:value xsi:type="xsd:string">2</ni:value>
</prov:entity>"#,
    r#"<prov:used prov:id="u_20">
  <prov:activity prov:ref="a_1"/>
  <prov:entity prov:ref="e_30"/>
</prov:used>"#,
];

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").replace("> <", "><")
}

#[test]
fn figure_blocks_reproduced() {
    let doc = extract_spm_batch(&read_fixture("fig4-step.log")).unwrap();
    let xml = squash(&serialize_xml(&doc, XmlMode::SpmLegacy).unwrap());
    let blocks: Vec<String> = FIG4_BLOCKS.iter().map(|b| squash(b)).collect();
    let body = blocks.join("");
    assert!(xml.contains(&body), "{xml}");
    assert_eq!(replay_plan(&doc).unwrap()[0].to_string(), "matlabbatch{2}.spm.temporal.st tr=2");
}

#[test]
fn chained_steps_share_files() {
    let doc = extract_spm_batch(&read_fixture("two-step.log")).unwrap();
    assert!(validate(&doc).is_valid());
    let smoothed = doc
        .entities()
        .find(|e| e.attributes.iter().any(|a| a.value.lexical().ends_with("srrun1.nii")))
        .unwrap()
        .id
        .clone();
    let closure = closure_oracle(&doc, &smoothed);
    let realign = doc
        .activities()
        .find(|a| a.attributes.iter().any(|x| x.value.lexical().contains("realign")))
        .unwrap();
    assert!(closure.contains(&realign.id));
    let lib: std::collections::BTreeSet<String> = provenance_closure(&doc, &smoothed)
        .unwrap()
        .records()
        .iter()
        .filter_map(|r| r.id().map(str::to_string))
        .collect();
    assert_eq!(lib, closure);

    let plan = replay_plan(&doc).unwrap();
    let lines: Vec<String> = plan.iter().map(ToString::to_string).collect();
    assert_eq!(
        lines,
        [
            "matlabbatch{1}.spm.spatial.realign.estwrite quality=0.9 rtm=1 in=/data/sub01/func/run1.nii out=/data/sub01/func/rrun1.nii out=/data/sub01/func/rp_run1.txt",
            "matlabbatch{3}.spm.spatial.smooth fwhm=8 8 8 in=/data/sub01/func/rrun1.nii out=/data/sub01/func/srrun1.nii",
        ]
    );
}

#[test]
fn replay_closure_is_isomorphic() {
    for name in ["fig4-step.log", "two-step.log"] {
        let first = extract_spm_batch(&read_fixture(name)).unwrap();
        let log = regenerate_log(&replay_plan(&first).unwrap());
        let second = extract_spm_batch(&log).unwrap();
        assert_eq!(canonical_form(&first), canonical_form(&second), "{name}");
    }
}

#[test]
fn extraction_is_deterministic() {
    let log = read_fixture("two-step.log");
    assert_eq!(extract_spm_batch(&log).unwrap(), extract_spm_batch(&log).unwrap());
}

#[test]
fn recon_all_stages() {
    let log = read_fixture("recon-all.log");
    let rules = RuleSet::parse(&read_fixture("recon-all.rules")).unwrap();
    let out = extract_with_rules(&log, &rules).unwrap();
    let stage_lines = log.lines().filter(|l| l.starts_with("#@# ")).count();
    assert_eq!(out.document.activities().count(), stage_lines);
    assert!(validate(&out.document).is_valid(), "{}", validate(&out.document));
    let matched = log
        .lines()
        .filter(|l| rules.rules.iter().any(|r| r.pattern.is_match(l)))
        .count();
    assert_eq!(out.unmatched_lines, log.lines().count() - matched);
    let last = out.document.activities().last().unwrap();
    assert!(last.end.is_some());
    assert!(out
        .document
        .records()
        .iter()
        .all(|r| r.category() != Some(Category::Activity) || r.types().any(|t| t.to_string() == "fs:ReconStage")));
}

#[test]
fn spm_errors() {
    assert!(matches!(
        extract_spm_batch("BEGIN x 07-Jun-2012 14:06:39\n"),
        Err(NidmError::UnbalancedStep(1))
    ));
    assert!(extract_spm_batch("").unwrap().is_empty());
}

fn arb_step() -> impl Strategy<Value = (String, Vec<(String, String)>, Vec<usize>, Vec<usize>)> {
    (
        "[a-z]{1,6}(\\.[a-z]{1,6}){0,3}",
        prop::collection::vec(("[a-z][a-z0-9_]{0,5}", "[A-Za-z0-9.]{1,6}( [0-9]{1,2}){0,2}"), 0..4),
        prop::collection::vec(0usize..6, 0..3),
        prop::collection::vec(0usize..6, 0..3),
    )
}

proptest! {
    #[test]
    fn random_logs_survive_replay(steps in prop::collection::vec(arb_step(), 0..5)) {
        let mut log = String::new();
        for (i, (label, params, ins, outs)) in steps.iter().enumerate() {
            log.push_str(&format!("BEGIN {label} 2012-06-07T10:{:02}:00\n", i * 2));
            for (n, v) in params {
                log.push_str(&format!("PARAM {n} {v}\n"));
            }
            for f in ins {
                log.push_str(&format!("IN /d/f{f}.nii\n"));
            }
            for f in outs {
                log.push_str(&format!("OUT /d/f{f}.nii\n"));
            }
            log.push_str(&format!("END 2012-06-07T10:{:02}:30\n", i * 2));
        }
        let first = extract_spm_batch(&log).unwrap();
        prop_assert!(validate(&first).is_valid());
        let second = extract_spm_batch(&regenerate_log(&replay_plan(&first).unwrap())).unwrap();
        prop_assert_eq!(canonical_form(&first), canonical_form(&second));
    }
}
