//! Schema-enforcing triple store.
//!
//! Entities are interned by `(kind, surface)`; triples are kept in a set so
//! duplicates never exist. Adjacency is maintained in both directions and
//! every listing is returned in ascending id order.

mod import;
mod snapshot;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{self, Direction, EntityKind, PathSpec, RelationKind, SchemaError};
use crate::text::normalize_surface;

pub use import::{import_candidates, ImportReport};
pub use snapshot::{SnapshotError, SNAPSHOT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u64);

impl std::fmt::Display for EntityId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub entity_id: EntityId,
    pub kind: EntityKind,
    pub surface: String,
    /// Corpus ids of the papers that mention this entity.
    pub provenance: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityId,
    pub relation: RelationKind,
    pub object: EntityId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("entity surface must not be empty")]
    EmptySurface,
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("triple endpoint {0} does not exist")]
    DanglingEndpoint(EntityId),
    #[error("inter-paper triple on {0} would be a self-loop")]
    SelfLoop(EntityId),
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("path starts at {expected} but entity {id} is a {actual}")]
    KindMismatch {
        id: EntityId,
        expected: EntityKind,
        actual: EntityKind,
    },
    #[error("entity {id} is a {kind}, not a Title")]
    NonTitle { id: EntityId, kind: EntityKind },
}

/// Provenance of a snapshot.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildMetadata {
    pub corpus_hash: String,
    pub pipeline_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub entities_by_kind: BTreeMap<EntityKind, usize>,
    pub triples_by_relation: BTreeMap<RelationKind, usize>,
    pub total_entities: usize,
    pub total_triples: usize,
}

impl GraphStats {
    /// Plain-text table, one line per kind and relation.
    pub fn render(&self) -> String {
        let mut out = String::from("entity kind\tcount\n");
        for (k, n) in &self.entities_by_kind {
            out.push_str(&format!("{k}\t{n}\n"));
        }
        out.push_str(&format!("total entities\t{}\n\nrelation\tcount\n", self.total_entities));
        for (r, n) in &self.triples_by_relation {
            out.push_str(&format!("{r}\t{n}\n"));
        }
        out.push_str(&format!("total triples\t{}\n", self.total_triples));
        out
    }
}

#[derive(Debug, Default)]
pub struct GraphStore {
    entities: BTreeMap<EntityId, EntityRecord>,
    by_key: HashMap<(EntityKind, String), EntityId>,
    by_normalized: HashMap<(EntityKind, String), BTreeSet<EntityId>>,
    titles_by_paper: HashMap<String, BTreeSet<EntityId>>,
    triples: BTreeSet<Triple>,
    outbound: BTreeMap<EntityId, BTreeSet<(RelationKind, EntityId)>>,
    inbound: BTreeMap<EntityId, BTreeSet<(RelationKind, EntityId)>>,
    next_id: u64,
    metadata: BuildMetadata,
    scans: AtomicU64,
}

impl Clone for GraphStore {
    fn clone(&self) -> Self {
        GraphStore {
            entities: self.entities.clone(),
            by_key: self.by_key.clone(),
            by_normalized: self.by_normalized.clone(),
            titles_by_paper: self.titles_by_paper.clone(),
            triples: self.triples.clone(),
            outbound: self.outbound.clone(),
            inbound: self.inbound.clone(),
            next_id: self.next_id,
            metadata: self.metadata.clone(),
            scans: AtomicU64::new(self.scans.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for GraphStore {
    /// Same ids, entities, triples and metadata.
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities
            && self.triples == other.triples
            && self.next_id == other.next_id
            && self.metadata == other.metadata
    }
}

impl GraphStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn metadata(&self) -> &BuildMetadata {
        &self.metadata
    }

    pub fn set_metadata(&mut self, metadata: BuildMetadata) {
        self.metadata = metadata;
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    /// Number of whole-graph iterations performed so far. Lookups and
    /// adjacency walks do not count.
    pub fn scan_count(&self) -> u64 {
        self.scans.load(Ordering::Relaxed)
    }

    fn note_scan(&self) {
        self.scans.fetch_add(1, Ordering::Relaxed);
    }

    pub fn upsert_entity<I, S>(
        &mut self,
        kind: EntityKind,
        surface: &str,
        provenance: I,
    ) -> Result<EntityId, GraphError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        if surface.trim().is_empty() {
            return Err(GraphError::EmptySurface);
        }
        let key = (kind, surface.to_string());
        let id = match self.by_key.get(&key) {
            Some(id) => *id,
            None => {
                let id = EntityId(self.next_id);
                self.next_id += 1;
                self.entities.insert(
                    id,
                    EntityRecord {
                        entity_id: id,
                        kind,
                        surface: surface.to_string(),
                        provenance: BTreeSet::new(),
                    },
                );
                self.by_key.insert(key, id);
                self.by_normalized
                    .entry((kind, normalize_surface(surface)))
                    .or_default()
                    .insert(id);
                id
            }
        };
        let record = self.entities.get_mut(&id).expect("interned id exists");
        for p in provenance {
            let p = p.into();
            if kind == EntityKind::Title {
                self.titles_by_paper.entry(p.clone()).or_default().insert(id);
            }
            record.provenance.insert(p);
        }
        Ok(id)
    }

    pub fn entity(&self, id: EntityId) -> Option<&EntityRecord> {
        self.entities.get(&id)
    }

    fn require(&self, id: EntityId) -> Result<&EntityRecord, GraphError> {
        self.entities.get(&id).ok_or(GraphError::UnknownEntity(id))
    }

    /// Exact lookup by `(kind, surface)`.
    pub fn find(&self, kind: EntityKind, surface: &str) -> Option<EntityId> {
        self.by_key.get(&(kind, surface.to_string())).copied()
    }

    /// Lookup after case-folding and whitespace/punctuation normalization.
    pub fn find_normalized(&self, kind: EntityKind, surface: &str) -> Vec<EntityId> {
        self.by_normalized
            .get(&(kind, normalize_surface(surface)))
            .map(|ids| ids.iter().copied().collect())
            .unwrap_or_default()
    }

    /// Title entities carrying `corpus_id` in their provenance.
    pub fn titles_for_paper(&self, corpus_id: &str) -> Vec<EntityId> {
        self.titles_by_paper
            .get(corpus_id)
            .map(|ids| ids.iter().copied().collect())
            .unwrap_or_default()
    }

    /// All entities in id order. Counts as a scan.
    pub fn entities(&self) -> impl Iterator<Item = &EntityRecord> {
        self.note_scan();
        self.entities.values()
    }

    /// Entities of one kind in id order. Counts as a scan.
    pub fn entities_of_kind(&self, kind: EntityKind) -> impl Iterator<Item = &EntityRecord> {
        self.note_scan();
        self.entities.values().filter(move |e| e.kind == kind)
    }

    /// All triples in `(subject, relation, object)` order. Counts as a scan.
    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.note_scan();
        self.triples.iter()
    }

    pub fn contains_triple(&self, triple: &Triple) -> bool {
        self.triples.contains(triple)
    }

    pub fn insert_triple(&mut self, triple: Triple) -> Result<InsertOutcome, GraphError> {
        let subject = self
            .entities
            .get(&triple.subject)
            .ok_or(GraphError::DanglingEndpoint(triple.subject))?;
        let object = self
            .entities
            .get(&triple.object)
            .ok_or(GraphError::DanglingEndpoint(triple.object))?;
        schema::validate_triple(subject.kind, triple.relation, object.kind)?;
        if triple.relation.is_inter_paper() && triple.subject == triple.object {
            return Err(GraphError::SelfLoop(triple.subject));
        }
        if !self.triples.insert(triple) {
            return Ok(InsertOutcome::Duplicate);
        }
        self.outbound
            .entry(triple.subject)
            .or_default()
            .insert((triple.relation, triple.object));
        self.inbound
            .entry(triple.object)
            .or_default()
            .insert((triple.relation, triple.subject));
        Ok(InsertOutcome::Inserted)
    }

    fn remove_triple(&mut self, triple: &Triple) -> bool {
        if !self.triples.remove(triple) {
            return false;
        }
        if let Some(set) = self.outbound.get_mut(&triple.subject) {
            set.remove(&(triple.relation, triple.object));
        }
        if let Some(set) = self.inbound.get_mut(&triple.object) {
            set.remove(&(triple.relation, triple.subject));
        }
        true
    }

    /// Triples touching `id`, outbound first, in set order.
    pub fn incident_triples(&self, id: EntityId) -> Vec<Triple> {
        let out = self.outbound.get(&id).into_iter().flatten().map(|&(r, o)| Triple {
            subject: id,
            relation: r,
            object: o,
        });
        let inc = self.inbound.get(&id).into_iter().flatten().map(|&(r, s)| Triple {
            subject: s,
            relation: r,
            object: id,
        });
        out.chain(inc).collect()
    }

    /// Remove an entity together with every triple touching it.
    pub fn remove_entity(&mut self, id: EntityId) -> Option<EntityRecord> {
        for t in self.incident_triples(id) {
            self.remove_triple(&t);
        }
        let record = self.entities.remove(&id)?;
        self.by_key.remove(&(record.kind, record.surface.clone()));
        let nkey = (record.kind, normalize_surface(&record.surface));
        if let Some(set) = self.by_normalized.get_mut(&nkey) {
            set.remove(&id);
            if set.is_empty() {
                self.by_normalized.remove(&nkey);
            }
        }
        if record.kind == EntityKind::Title {
            for p in &record.provenance {
                if let Some(set) = self.titles_by_paper.get_mut(p) {
                    set.remove(&id);
                    if set.is_empty() {
                        self.titles_by_paper.remove(p);
                    }
                }
            }
        }
        self.outbound.remove(&id);
        self.inbound.remove(&id);
        Some(record)
    }

    /// Fold `from` into `into`: provenance is unioned, triples are rewired
    /// (duplicates collapse) and `from` is removed. Both must share a kind.
    pub fn merge_entities(&mut self, from: EntityId, into: EntityId) -> Result<(), GraphError> {
        if from == into {
            return Ok(());
        }
        let kind = self.require(into)?.kind;
        let from_kind = self.require(from)?.kind;
        if kind != from_kind {
            return Err(GraphError::KindMismatch {
                id: from,
                expected: kind,
                actual: from_kind,
            });
        }
        let rewired: Vec<Triple> = self
            .incident_triples(from)
            .into_iter()
            .map(|t| Triple {
                subject: if t.subject == from { into } else { t.subject },
                relation: t.relation,
                object: if t.object == from { into } else { t.object },
            })
            .collect();
        let record = self.remove_entity(from).expect("checked above");
        let surface = self.entities[&into].surface.clone();
        self.upsert_entity(kind, &surface, record.provenance)?;
        for t in rewired {
            match self.insert_triple(t) {
                Ok(_) | Err(GraphError::SelfLoop(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    /// Give an entity a new surface. If another entity of the same kind
    /// already has that surface the two are merged into it. Returns the id
    /// that now carries the surface.
    pub fn rename_entity(&mut self, id: EntityId, surface: &str) -> Result<EntityId, GraphError> {
        if surface.trim().is_empty() {
            return Err(GraphError::EmptySurface);
        }
        let record = self.require(id)?.clone();
        if record.surface == surface {
            return Ok(id);
        }
        if let Some(existing) = self.find(record.kind, surface) {
            self.merge_entities(id, existing)?;
            return Ok(existing);
        }
        self.by_key.remove(&(record.kind, record.surface.clone()));
        let old_norm = (record.kind, normalize_surface(&record.surface));
        if let Some(set) = self.by_normalized.get_mut(&old_norm) {
            set.remove(&id);
            if set.is_empty() {
                self.by_normalized.remove(&old_norm);
            }
        }
        self.by_key.insert((record.kind, surface.to_string()), id);
        self.by_normalized
            .entry((record.kind, normalize_surface(surface)))
            .or_default()
            .insert(id);
        self.entities.get_mut(&id).expect("checked above").surface = surface.to_string();
        Ok(id)
    }

    pub fn neighbors(
        &self,
        id: EntityId,
        relation: Option<RelationKind>,
        direction: Direction,
    ) -> Result<Vec<EntityId>, GraphError> {
        self.require(id)?;
        let keep = |r: &RelationKind| relation.is_none_or(|want| want == *r);
        let mut out = BTreeSet::new();
        if matches!(direction, Direction::Outbound | Direction::Both) {
            if let Some(set) = self.outbound.get(&id) {
                out.extend(set.iter().filter(|(r, _)| keep(r)).map(|&(_, o)| o));
            }
        }
        if matches!(direction, Direction::Inbound | Direction::Both) {
            if let Some(set) = self.inbound.get(&id) {
                out.extend(set.iter().filter(|(r, _)| keep(r)).map(|&(_, s)| s));
            }
        }
        Ok(out.into_iter().collect())
    }

    /// Apply each hop to the current frontier. Nodes of the wrong kind are
    /// dropped, so the result only ever contains nodes of the path's end kind.
    pub fn walk_path(&self, start: EntityId, path: &PathSpec) -> Result<Vec<EntityId>, GraphError> {
        let record = self.require(start)?;
        if record.kind != path.start {
            return Err(GraphError::KindMismatch {
                id: start,
                expected: path.start,
                actual: record.kind,
            });
        }
        let mut frontier: BTreeSet<EntityId> = BTreeSet::from([start]);
        for hop in &path.hops {
            let mut next = BTreeSet::new();
            for id in &frontier {
                for n in self.neighbors(*id, Some(hop.relation), hop.direction)? {
                    if self.entities[&n].kind == hop.arrives_at {
                        next.insert(n);
                    }
                }
            }
            if next.is_empty() {
                return Ok(Vec::new());
            }
            frontier = next;
        }
        Ok(frontier.into_iter().collect())
    }

    /// Inter-paper triples with both endpoints in `titles`.
    pub fn inter_paper_edges(&self, titles: &BTreeSet<EntityId>) -> Result<Vec<Triple>, GraphError> {
        for id in titles {
            let record = self.require(*id)?;
            if record.kind != EntityKind::Title {
                return Err(GraphError::NonTitle {
                    id: *id,
                    kind: record.kind,
                });
            }
        }
        let mut edges = Vec::new();
        for id in titles {
            for &(relation, object) in self.outbound.get(id).into_iter().flatten() {
                if relation.is_inter_paper() && titles.contains(&object) {
                    edges.push(Triple {
                        subject: *id,
                        relation,
                        object,
                    });
                }
            }
        }
        Ok(edges)
    }

    pub fn stats(&self) -> GraphStats {
        let mut entities_by_kind: BTreeMap<EntityKind, usize> =
            EntityKind::ALL.into_iter().map(|k| (k, 0)).collect();
        for e in self.entities.values() {
            *entities_by_kind.get_mut(&e.kind).expect("all kinds present") += 1;
        }
        let mut triples_by_relation: BTreeMap<RelationKind, usize> =
            RelationKind::ALL.into_iter().map(|r| (r, 0)).collect();
        for t in &self.triples {
            *triples_by_relation.get_mut(&t.relation).expect("all relations present") += 1;
        }
        GraphStats {
            entities_by_kind,
            triples_by_relation,
            total_entities: self.entities.len(),
            total_triples: self.triples.len(),
        }
    }

    /// Full-scan integrity check: every triple endpoint exists, every triple
    /// fits a signature, no inter-paper self-loops, indexes agree.
    pub fn check_integrity(&self) -> Result<(), String> {
        for t in &self.triples {
            let s = self
                .entities
                .get(&t.subject)
                .ok_or_else(|| format!("dangling subject {}", t.subject))?;
            let o = self
                .entities
                .get(&t.object)
                .ok_or_else(|| format!("dangling object {}", t.object))?;
            schema::validate_triple(s.kind, t.relation, o.kind).map_err(|e| e.to_string())?;
            if t.relation.is_inter_paper() && t.subject == t.object {
                return Err(format!("self-loop on {}", t.subject));
            }
        }
        for (id, e) in &self.entities {
            if e.surface.trim().is_empty() {
                return Err(format!("entity {id} has an empty surface"));
            }
            if self.by_key.get(&(e.kind, e.surface.clone())) != Some(id) {
                return Err(format!("entity {id} missing from key index"));
            }
            if id.0 >= self.next_id {
                return Err(format!("entity {id} beyond next id {}", self.next_id));
            }
        }
        if self.by_key.len() != self.entities.len() {
            return Err("key index size differs from entity table".into());
        }
        let adjacency: usize = self.outbound.values().map(BTreeSet::len).sum();
        if adjacency != self.triples.len() {
            return Err("adjacency size differs from triple set".into());
        }
        Ok(())
    }

    pub(crate) fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Reinsert an entity with a fixed id (snapshot loading).
    pub(crate) fn restore_entity(&mut self, record: EntityRecord) -> Result<(), String> {
        let key = (record.kind, record.surface.clone());
        if self.by_key.contains_key(&key) {
            return Err(format!("duplicate entity ({}, {})", record.kind, record.surface));
        }
        if self.entities.contains_key(&record.entity_id) {
            return Err(format!("duplicate entity id {}", record.entity_id));
        }
        if record.surface.trim().is_empty() {
            return Err(format!("entity {} has an empty surface", record.entity_id));
        }
        let id = record.entity_id;
        self.by_key.insert(key, id);
        self.by_normalized
            .entry((record.kind, normalize_surface(&record.surface)))
            .or_default()
            .insert(id);
        if record.kind == EntityKind::Title {
            for p in &record.provenance {
                self.titles_by_paper.entry(p.clone()).or_default().insert(id);
            }
        }
        self.next_id = self.next_id.max(id.0 + 1);
        self.entities.insert(id, record);
        Ok(())
    }

    pub(crate) fn set_next_id(&mut self, next: u64) {
        self.next_id = self.next_id.max(next);
    }
}
