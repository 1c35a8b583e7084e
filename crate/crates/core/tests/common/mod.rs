//! Seeded random graphs shared by the integration tests.

#![allow(dead_code)]

use akg_core::graph::{EntityId, GraphStore, Triple};
use akg_core::schema::{all_signatures, EntityKind, RelationKind};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Surface pools with spelling variants, so clustering has something to
/// merge, plus characters the snapshot format must escape.
const TASKS: [&str; 8] = [
    "named entity recognition",
    "Named Entity Recognition",
    "named-entity recognition",
    "machine translation",
    "Machine Translation",
    "dependency parsing",
    "question answering",
    "Question Answering",
];
const DATASETS: [&str; 7] = ["SQuAD", "squad", "SQuAD 1.1", "CoNLL-2003", "conll-2003", "WMT14", "Penn\tTreebank"];
const METRICS: [&str; 6] = ["F1", "f1", "F1 score", "BLEU", "bleu", "accuracy"];
const OTHERS: [&str; 6] = ["alpha", "beta\nline", "gamma \\ delta", "epsilon", "zeta", "eta"];

pub fn surface_for(kind: EntityKind, rng: &mut ChaCha8Rng) -> String {
    match kind {
        EntityKind::Task => TASKS.choose(rng).unwrap().to_string(),
        EntityKind::Dataset => DATASETS.choose(rng).unwrap().to_string(),
        EntityKind::Metric => METRICS.choose(rng).unwrap().to_string(),
        _ => format!("{} {}", kind, OTHERS.choose(rng).unwrap()),
    }
}

/// A schema-valid graph over `papers` papers. Every entity carries the
/// provenance of the paper it was drawn for.
pub fn random_graph(seed: u64, papers: usize, elements: usize, triples: usize) -> GraphStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = GraphStore::new();
    let mut ids: Vec<(EntityId, EntityKind, String)> = Vec::new();
    for p in 0..papers {
        let corpus_id = format!("P{p}");
        let t = g
            .upsert_entity(EntityKind::Title, &format!("Paper number {p}"), [corpus_id.clone()])
            .unwrap();
        ids.push((t, EntityKind::Title, corpus_id));
    }
    for _ in 0..elements {
        let kind = *EntityKind::ALL[1..].choose(&mut rng).unwrap();
        let paper = format!("P{}", rng.random_range(0..papers));
        let id = g.upsert_entity(kind, &surface_for(kind, &mut rng), [paper.clone()]).unwrap();
        ids.push((id, kind, paper));
    }
    let signatures = all_signatures();
    for _ in 0..triples {
        let sig = signatures.choose(&mut rng).unwrap();
        let subjects: Vec<_> = ids.iter().filter(|e| e.1 == sig.source).collect();
        let objects: Vec<_> = ids.iter().filter(|e| e.1 == sig.target).collect();
        let (Some(s), Some(o)) = (subjects.choose(&mut rng), objects.choose(&mut rng)) else {
            continue;
        };
        if sig.relation.is_inter_paper() && s.0 == o.0 {
            continue;
        }
        g.insert_triple(Triple {
            subject: s.0,
            relation: sig.relation,
            object: o.0,
        })
        .unwrap();
    }
    g
}

pub fn title(g: &mut GraphStore, n: usize) -> EntityId {
    g.upsert_entity(EntityKind::Title, &format!("Title {n}"), [format!("P{n}")]).unwrap()
}

pub fn link(g: &mut GraphStore, a: EntityId, b: EntityId, relation: RelationKind) {
    g.insert_triple(Triple {
        subject: a,
        relation,
        object: b,
    })
    .unwrap();
}
