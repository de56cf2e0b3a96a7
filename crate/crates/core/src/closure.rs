//! Transitive ancestry of an entity.

use std::collections::{HashSet, VecDeque};

use crate::error::{NidmError, Result};
use crate::model::{Document, Record};

/// Returns the subgraph explaining how `entity_id` came to be.
///
/// Starting from the entity, the walk follows, until nothing new is added:
/// entity -> generating activity (wasGeneratedBy), source entity
/// (wasDerivedFrom), attributed agent (wasAttributedTo), members when the
/// entity is a collection (hadMember); activity -> used entities, associated
/// agents and plans, informing activities; agent -> agents it acted for.
/// Every relation whose endpoints are all inside the result is kept.
/// Records keep their document order.
pub fn provenance_closure(doc: &Document, entity_id: &str) -> Result<Document> {
    match doc.get(entity_id) {
        Some(Record::Entity(_)) => {}
        _ => return Err(NidmError::UnknownId(entity_id.to_string())),
    }

    let mut included: HashSet<&str> = HashSet::new();
    let mut queue = VecDeque::new();
    included.insert(entity_id);
    queue.push_back(entity_id);

    while let Some(id) = queue.pop_front() {
        for rel in doc.relations() {
            // every kind points from the later record to its antecedent
            if rel.subject != id {
                continue;
            }
            let reached = std::iter::once(rel.object.as_str()).chain(rel.plan.as_deref());
            for next in reached {
                if doc.get(next).is_some() && included.insert(next) {
                    queue.push_back(next);
                }
            }
        }
    }

    let records = doc
        .records()
        .iter()
        .filter(|r| match r {
            Record::Relation(rel) => {
                included.contains(rel.subject.as_str())
                    && included.contains(rel.object.as_str())
                    && rel.plan.as_deref().map_or(true, |p| included.contains(p))
            }
            other => other.id().is_some_and(|id| included.contains(id)),
        })
        .cloned()
        .collect();
    Document::new(doc.namespaces().clone(), records)
}
