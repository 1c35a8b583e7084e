//! Loading extraction candidates into the store.

use serde::Serialize;

use super::{EntityId, GraphError, GraphStore, InsertOutcome, Triple};
use crate::extraction::{DumpRecord, EntityRef};
use crate::schema::{normalize_direction, EntityKind, Orientation};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ImportReport {
    pub entity_candidates: usize,
    pub triples_inserted: usize,
    pub triples_duplicate: usize,
    /// Triples written object-first and flipped into signature direction.
    pub triples_reversed: usize,
    /// Candidates that could not be stored, with the reason.
    pub rejected: Vec<String>,
}

fn resolve(graph: &mut GraphStore, r: &EntityRef, corpus_id: &str) -> Result<EntityId, GraphError> {
    if r.kind == EntityKind::Title {
        if let Some(paper) = &r.paper {
            if let Some(id) = graph.titles_for_paper(paper).first() {
                return Ok(*id);
            }
            return graph.upsert_entity(EntityKind::Title, &r.surface, [paper.as_str()]);
        }
    }
    graph.upsert_entity(r.kind, &r.surface, [corpus_id])
}

/// Upsert every entity candidate, then insert every triple candidate.
/// Stage records are ignored. Schema-invalid candidates are reported, not
/// fatal; a candidate stated in reverse direction is flipped.
pub fn import_candidates<'a>(
    graph: &mut GraphStore,
    records: impl IntoIterator<Item = &'a DumpRecord>,
) -> ImportReport {
    let records: Vec<&DumpRecord> = records.into_iter().collect();
    let mut report = ImportReport::default();
    for record in &records {
        if let DumpRecord::Entity(e) = record {
            report.entity_candidates += 1;
            let provenance = [e.corpus_id.as_str()];
            if let Err(err) = graph.upsert_entity(e.kind, &e.surface, provenance) {
                report.rejected.push(format!("entity ({}, {:?}): {err}", e.kind, e.surface));
            }
        }
    }
    for record in &records {
        let DumpRecord::Triple(t) = record else {
            continue;
        };
        let describe = || {
            format!(
                "triple ({} {:?}, {}, {} {:?}) from {}",
                t.subject.kind, t.subject.surface, t.relation, t.object.kind, t.object.surface, t.corpus_id
            )
        };
        let (mut s, mut o) = (&t.subject, &t.object);
        match normalize_direction(s.kind, t.relation, o.kind) {
            Ok(Orientation::AsGiven) => {}
            Ok(Orientation::Reversed) => {
                std::mem::swap(&mut s, &mut o);
                report.triples_reversed += 1;
            }
            Err(err) => {
                report.rejected.push(format!("{}: {err}", describe()));
                continue;
            }
        }
        let ids = resolve(graph, s, &t.corpus_id).and_then(|s| Ok((s, resolve(graph, o, &t.corpus_id)?)));
        let outcome = ids.and_then(|(subject, object)| {
            graph.insert_triple(Triple {
                subject,
                relation: t.relation,
                object,
            })
        });
        match outcome {
            Ok(InsertOutcome::Inserted) => report.triples_inserted += 1,
            Ok(InsertOutcome::Duplicate) => report.triples_duplicate += 1,
            Err(err) => report.rejected.push(format!("{}: {err}", describe())),
        }
    }
    report
}
