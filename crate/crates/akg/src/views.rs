//! Read-only projections of a graph used by `query` and the service.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use akg_core::graph::{EntityId, EntityRecord, GraphStore, Triple};
use akg_core::schema::{path_from_title, EntityKind, RelationKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EntityView {
    pub entity_id: EntityId,
    pub kind: EntityKind,
    pub surface: String,
    pub papers: Vec<String>,
}

impl From<&EntityRecord> for EntityView {
    fn from(e: &EntityRecord) -> Self {
        EntityView {
            entity_id: e.entity_id,
            kind: e.kind,
            surface: e.surface.clone(),
            papers: e.provenance.iter().cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FactView {
    pub subject: String,
    pub subject_kind: EntityKind,
    pub relation: RelationKind,
    pub object: String,
    pub object_kind: EntityKind,
}

pub fn fact(graph: &GraphStore, t: &Triple) -> Option<FactView> {
    let s = graph.entity(t.subject)?;
    let o = graph.entity(t.object)?;
    Some(FactView {
        subject: s.surface.clone(),
        subject_kind: s.kind,
        relation: t.relation,
        object: o.surface.clone(),
        object_kind: o.kind,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EntityLookup {
    pub entity: EntityView,
    pub facts: Vec<FactView>,
}

/// Exact `(kind, surface)` lookup, falling back to normalized matching.
pub fn lookup_entity(graph: &GraphStore, kind: EntityKind, surface: &str) -> Vec<EntityLookup> {
    let ids = match graph.find(kind, surface) {
        Some(id) => vec![id],
        None => graph.find_normalized(kind, surface),
    };
    ids.into_iter()
        .filter_map(|id| {
            let record = graph.entity(id)?;
            Some(EntityLookup {
                entity: record.into(),
                facts: graph
                    .incident_triples(id)
                    .iter()
                    .filter_map(|t| fact(graph, t))
                    .collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PaperDetail {
    pub corpus_id: String,
    pub title: String,
    pub elements: BTreeMap<EntityKind, Vec<String>>,
    pub facts: Vec<FactView>,
}

/// Every element reachable from the paper's title by the canonical
/// Title-to-kind paths, and every fact among the title and those elements.
pub fn paper_detail(graph: &GraphStore, corpus_id: &str) -> Option<PaperDetail> {
    let title = *graph.titles_for_paper(corpus_id).first()?;
    let record = graph.entity(title)?;
    let mut members: BTreeSet<EntityId> = BTreeSet::from([title]);
    let mut elements = BTreeMap::new();
    for kind in EntityKind::ALL {
        if kind == EntityKind::Title {
            continue;
        }
        let Ok(path) = path_from_title(kind) else { continue };
        let ids = graph.walk_path(title, &path).unwrap_or_default();
        if ids.is_empty() {
            continue;
        }
        members.extend(&ids);
        // Intermediate authors carry the works-for facts of institutions.
        if kind == EntityKind::Institution {
            if let Ok(authors) = path_from_title(EntityKind::Author) {
                members.extend(graph.walk_path(title, &authors).unwrap_or_default());
            }
        }
        let surfaces = ids
            .iter()
            .filter_map(|id| graph.entity(*id).map(|e| e.surface.clone()))
            .collect();
        elements.insert(kind, surfaces);
    }
    let mut triples = BTreeSet::new();
    for id in &members {
        for t in graph.incident_triples(*id) {
            let other = if t.subject == *id { t.object } else { t.subject };
            if members.contains(&other) || t.relation.is_inter_paper() {
                triples.insert(t);
            }
        }
    }
    Some(PaperDetail {
        corpus_id: corpus_id.to_string(),
        title: record.surface.clone(),
        elements,
        facts: triples.iter().filter_map(|t| fact(graph, t)).collect(),
    })
}
