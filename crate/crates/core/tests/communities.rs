//! Community formation against connected components by transitive closure.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use akg_core::graph::{EntityId, GraphStore};
use akg_core::qa::{form_communities, SubGraphBundle, TitleElements};
use akg_core::schema::{EntityKind, RelationKind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    graph: GraphStore,
    bundle: SubGraphBundle,
    /// Undirected edges between bundle titles, as index pairs.
    edges: Vec<(usize, usize)>,
    titles: Vec<EntityId>,
}

fn case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=12);
    let outside = rng.random_range(0..4);
    let mut graph = GraphStore::new();
    let all: Vec<EntityId> = (0..n + outside).map(|i| common::title(&mut graph, i)).collect();
    let titles = all[..n].to_vec();
    let mut edges = Vec::new();
    let p = rng.random_range(0.0..0.35);
    for a in 0..all.len() {
        for b in 0..all.len() {
            if a == b || !rng.random_bool(p) {
                continue;
            }
            let relation = if rng.random_bool(0.5) { RelationKind::DirectUse } else { RelationKind::TaskRelated };
            common::link(&mut graph, all[a], all[b], relation);
            if a < n && b < n {
                edges.push((a, b));
            }
        }
    }
    let bundle = SubGraphBundle {
        target_kind: EntityKind::Method,
        titles: titles
            .iter()
            .map(|&t| {
                let elements = TitleElements {
                    title: graph.entity(t).unwrap().surface.clone(),
                    targets: Vec::new(),
                    introductions: Vec::new(),
                };
                (t, elements)
            })
            .collect(),
        matched_source_ids: Vec::new(),
    };
    Case { graph, bundle, edges, titles }
}

/// Components from the reflexive-symmetric-transitive closure of the edges.
fn oracle(n: usize, edges: &[(usize, usize)]) -> BTreeSet<BTreeSet<usize>> {
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(a, b) in edges {
        reach[a][b] = true;
        reach[b][a] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    (0..n).map(|i| (0..n).filter(|&j| reach[i][j]).collect()).collect()
}

fn check(seed: u64) -> Result<(), String> {
    let c = case(seed);
    let communities = form_communities(&c.bundle, &c.graph).map_err(|e| e.to_string())?;
    let index: BTreeMap<EntityId, usize> = c.titles.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let ours: BTreeSet<BTreeSet<usize>> = communities
        .iter()
        .map(|com| com.title_ids.iter().map(|t| index[t]).collect())
        .collect();
    if ours != oracle(c.titles.len(), &c.edges) {
        return Err(format!("seed {seed}: components differ: {ours:?}"));
    }
    let firsts: Vec<EntityId> = communities.iter().map(|com| com.title_ids[0]).collect();
    if !firsts.windows(2).all(|w| w[0] < w[1]) {
        return Err(format!("seed {seed}: communities not ordered by smallest title id"));
    }
    for com in &communities {
        if !com.title_ids.windows(2).all(|w| w[0] < w[1]) {
            return Err(format!("seed {seed}: members not sorted"));
        }
    }
    let internal: usize = communities.iter().map(|com| com.internal_edges.len()).sum();
    let distinct: BTreeSet<_> = c.edges.iter().collect();
    if internal != distinct.len() {
        return Err(format!("seed {seed}: {internal} internal edges, expected {}", distinct.len()));
    }
    Ok(())
}

#[test]
fn hundred_seeded_bundles() {
    for seed in 0..100 {
        check(seed).unwrap();
    }
}

proptest! {
    #[test]
    fn arbitrary_bundles(seed in any::<u64>()) {
        check(seed).map_err(TestCaseError::fail)?;
    }
}
