//! Text snapshot format.
//!
//! ```text
//! akg-snapshot 1
//! corpus_hash\t<escaped>
//! pipeline_version\t<escaped>
//! next_id\t<n>
//! entities\t<n>
//! triples\t<n>
//! body_sha256\t<hex>
//! ---
//! E\t<id>\t<kind>\t<surface>[\t<corpus_id>]*
//! T\t<subject>\t<relation>\t<object>
//! ```
//!
//! Strings escape backslash, tab, newline and carriage return. The body is
//! everything after the `---` line; its SHA-256 guards against truncation
//! and tampering. Entities are written in id order and triples in
//! `(subject, relation, object)` order, so serialization is a fixed point.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{BuildMetadata, EntityId, EntityRecord, GraphStore, Triple};
use crate::schema::{EntityKind, RelationKind};
use crate::text::{escape_field as escape, unescape_field};

pub const SNAPSHOT_VERSION: u32 = 1;
const MAGIC: &str = "akg-snapshot";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("cannot access snapshot {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
    #[error("snapshot version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
}

fn corrupt(msg: impl Into<String>) -> SnapshotError {
    SnapshotError::Corrupt(msg.into())
}

fn unescape(s: &str) -> Result<String, SnapshotError> {
    unescape_field(s).map_err(SnapshotError::Corrupt)
}

impl GraphStore {
    pub fn to_snapshot_string(&self) -> String {
        let mut body = String::new();
        for e in self.entities.values() {
            body.push_str(&format!("E\t{}\t{}\t{}", e.entity_id, e.kind, escape(&e.surface)));
            for p in &e.provenance {
                body.push('\t');
                body.push_str(&escape(p));
            }
            body.push('\n');
        }
        for t in &self.triples {
            body.push_str(&format!("T\t{}\t{}\t{}\n", t.subject, t.relation, t.object));
        }
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        format!(
            "{MAGIC} {SNAPSHOT_VERSION}\ncorpus_hash\t{}\npipeline_version\t{}\nnext_id\t{}\nentities\t{}\ntriples\t{}\nbody_sha256\t{digest}\n---\n{body}",
            escape(&self.metadata.corpus_hash),
            escape(&self.metadata.pipeline_version),
            self.next_id(),
            self.entities.len(),
            self.triples.len(),
        )
    }

    pub fn from_snapshot_str(text: &str) -> Result<GraphStore, SnapshotError> {
        let (header, body) = text
            .split_once("\n---\n")
            .ok_or_else(|| corrupt("missing header separator"))?;
        let mut lines = header.lines();
        let first = lines.next().ok_or_else(|| corrupt("empty file"))?;
        let version = first
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| corrupt("not a snapshot file"))?
            .parse::<u32>()
            .map_err(|_| corrupt("unreadable version"))?;
        if version != SNAPSHOT_VERSION {
            return Err(SnapshotError::VersionMismatch {
                found: version,
                expected: SNAPSHOT_VERSION,
            });
        }
        let mut field = |name: &str| -> Result<String, SnapshotError> {
            let line = lines
                .next()
                .ok_or_else(|| corrupt(format!("missing header field {name}")))?;
            let (key, value) = line
                .split_once('\t')
                .ok_or_else(|| corrupt(format!("malformed header line `{line}`")))?;
            if key != name {
                return Err(corrupt(format!("expected header field {name}, found {key}")));
            }
            Ok(value.to_string())
        };
        let corpus_hash = unescape(&field("corpus_hash")?)?;
        let pipeline_version = unescape(&field("pipeline_version")?)?;
        let number = |s: String, what: &str| {
            s.parse::<u64>()
                .map_err(|_| corrupt(format!("unreadable {what} `{s}`")))
        };
        let next_id = number(field("next_id")?, "next_id")?;
        let entity_count = number(field("entities")?, "entity count")? as usize;
        let triple_count = number(field("triples")?, "triple count")? as usize;
        let body_sha = field("body_sha256")?;
        if hex::encode(Sha256::digest(body.as_bytes())) != body_sha {
            return Err(corrupt("body checksum mismatch"));
        }

        let mut graph = GraphStore::new();
        graph.set_metadata(BuildMetadata {
            corpus_hash,
            pipeline_version,
        });
        for (n, line) in body.lines().enumerate() {
            let at = |msg: String| corrupt(format!("body line {}: {msg}", n + 1));
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.first().copied() {
                Some("E") if fields.len() >= 4 => {
                    let id = fields[1]
                        .parse::<u64>()
                        .map_err(|_| at(format!("bad id `{}`", fields[1])))?;
                    let kind: EntityKind = fields[2].parse().map_err(|e| at(format!("{e}")))?;
                    let surface = unescape(fields[3])?;
                    let provenance = fields[4..]
                        .iter()
                        .map(|p| unescape(p))
                        .collect::<Result<_, _>>()?;
                    graph
                        .restore_entity(EntityRecord {
                            entity_id: EntityId(id),
                            kind,
                            surface,
                            provenance,
                        })
                        .map_err(at)?;
                }
                Some("T") if fields.len() == 4 => {
                    let id = |s: &str| {
                        s.parse::<u64>()
                            .map(EntityId)
                            .map_err(|_| at(format!("bad id `{s}`")))
                    };
                    let relation: RelationKind =
                        fields[2].parse().map_err(|e| at(format!("{e}")))?;
                    let triple = Triple {
                        subject: id(fields[1])?,
                        relation,
                        object: id(fields[3])?,
                    };
                    match graph.insert_triple(triple) {
                        Ok(super::InsertOutcome::Inserted) => {}
                        Ok(super::InsertOutcome::Duplicate) => {
                            return Err(at("duplicate triple".into()))
                        }
                        Err(e) => return Err(at(e.to_string())),
                    }
                }
                _ => return Err(at(format!("unrecognized record `{line}`"))),
            }
        }
        if graph.entity_count() != entity_count || graph.triple_count() != triple_count {
            return Err(corrupt("record counts disagree with header"));
        }
        if next_id < graph.next_id() {
            return Err(corrupt("next_id is below an existing entity id"));
        }
        graph.set_next_id(next_id);
        Ok(graph)
    }

    pub fn save(&self, path: &Path) -> Result<(), SnapshotError> {
        fs::write(path, self.to_snapshot_string()).map_err(|source| SnapshotError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<GraphStore, SnapshotError> {
        let text = fs::read_to_string(path).map_err(|source| SnapshotError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_snapshot_str(&text)
    }
}
