use std::fmt;

use crate::error::{NidmError, Result};
use crate::model::{AttributeValue, Document, Entity, QualifiedName, Record, RelationKind, Timestamp};
use crate::validate::validate;

/// What one activity did: enough to write its log step again.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PlanStep {
    pub label: String,
    pub params: Vec<(String, String)>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl fmt::Display for PlanStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)?;
        for (name, value) in &self.params {
            write!(f, " {name}={value}")?;
        }
        for path in &self.inputs {
            write!(f, " in={path}")?;
        }
        for path in &self.outputs {
            write!(f, " out={path}")?;
        }
        Ok(())
    }
}

fn is_parameter(e: &Entity) -> bool {
    e.attributes
        .iter()
        .any(|a| a.key == QualifiedName::prov("type") && a.value == AttributeValue::Text("parameter".into()))
}

fn attr<'a>(e: &'a Entity, prefix: &str, local: &str) -> Option<&'a AttributeValue> {
    e.attributes
        .iter()
        .find(|a| a.key.local() == local && (a.key.prefix() == prefix || (prefix == "nidm" && a.key.prefix() == "ni")))
        .map(|a| &a.value)
}

fn location(e: &Entity) -> String {
    attr(e, "prov", "location").map_or_else(|| e.id.clone(), AttributeValue::lexical)
}

/// One step per activity, ordered by start time then id.
pub fn replay_plan(doc: &Document) -> Result<Vec<PlanStep>> {
    let report = validate(doc);
    if !report.is_valid() {
        return Err(NidmError::InvalidDocument(report));
    }
    let mut activities: Vec<(Option<Timestamp>, &str)> = doc.activities().map(|a| (a.start, a.id.as_str())).collect();
    activities.sort();

    let entity = |id: &str| match doc.get(id) {
        Some(Record::Entity(e)) => Some(e),
        _ => None,
    };
    let mut steps = Vec::new();
    for (_, act_id) in activities {
        let Some(Record::Activity(act)) = doc.get(act_id) else {
            continue;
        };
        let label = act
            .attributes
            .iter()
            .find(|a| a.key == QualifiedName::prov("label"))
            .map_or_else(|| act.id.clone(), |a| a.value.lexical());
        let mut step = PlanStep {
            label,
            ..PlanStep::default()
        };
        for rel in doc.relations() {
            match rel.kind {
                RelationKind::Used if rel.subject == act_id => {
                    let Some(e) = entity(&rel.object) else { continue };
                    if is_parameter(e) {
                        let name = attr(e, "nidm", "name").map(AttributeValue::lexical).unwrap_or_default();
                        let name = name.strip_prefix("par: ").unwrap_or(&name).to_string();
                        let value = attr(e, "nidm", "value").map(AttributeValue::lexical).unwrap_or_default();
                        step.params.push((name, value));
                    } else {
                        step.inputs.push(location(e));
                    }
                }
                RelationKind::WasGeneratedBy if rel.object == act_id => {
                    if let Some(e) = entity(&rel.subject) {
                        step.outputs.push(location(e));
                    }
                }
                _ => {}
            }
        }
        steps.push(step);
    }
    Ok(steps)
}

/// Writes a synthetic SPM log for `plan`. Timestamps are placeholders one
/// minute apart.
pub fn regenerate_log(plan: &[PlanStep]) -> String {
    let base = Timestamp::parse("2000-01-01T00:00:00").expect("fixed timestamp");
    let mut out = String::new();
    for (i, step) in plan.iter().enumerate() {
        let start = base.plus_seconds(120 * i as i64);
        out.push_str(&format!("BEGIN {} {}\n", step.label, start.to_spm()));
        for (name, value) in &step.params {
            out.push_str(&format!("PARAM {name} {value}\n"));
        }
        for path in &step.inputs {
            out.push_str(&format!("IN {path}\n"));
        }
        for path in &step.outputs {
            out.push_str(&format!("OUT {path}\n"));
        }
        out.push_str(&format!("END {}\n", start.plus_seconds(60).to_spm()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::extract_spm_batch;

    #[test]
    fn figure_step() {
        let doc = extract_spm_batch(
            "BEGIN matlabbatch{2}.spm.temporal.st 07-Jun-2012 14:06:39\nPARAM tr 2\nEND 07-Jun-2012 14:09:00\n",
        )
        .unwrap();
        let plan = replay_plan(&doc).unwrap();
        assert_eq!(plan.len(), 1);
        assert_eq!(plan[0].to_string(), "matlabbatch{2}.spm.temporal.st tr=2");
    }

    #[test]
    fn empty_and_invalid() {
        assert!(replay_plan(&Document::empty()).unwrap().is_empty());
        let bad = crate::codecs::parse_provn("activity(a)\nused(-, a, ghost)").unwrap();
        assert!(matches!(replay_plan(&bad), Err(NidmError::InvalidDocument(_))));
        assert_eq!(regenerate_log(&[]), "");
    }

    #[test]
    fn regenerated_log_extracts_again() {
        let log = "BEGIN s1 07-Jun-2012 14:00:00\nPARAM fwhm 8 8 8\nIN raw.nii\nOUT a.nii\nEND 07-Jun-2012 14:01:00\n";
        let plan = replay_plan(&extract_spm_batch(log).unwrap()).unwrap();
        let again = replay_plan(&extract_spm_batch(&regenerate_log(&plan)).unwrap()).unwrap();
        assert_eq!(plan, again);
        assert_eq!(plan[0].to_string(), "s1 fwhm=8 8 8 in=raw.nii out=a.nii");
    }
}
