//! Canonical representatives for Task, Dataset and Metric surfaces.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::kmeans::{choose_k, kmeans, nearest, ClusterError, ClusteringProblem};
use crate::graph::{EntityId, GraphStore};
use crate::llm::{cosine, EmbedError, EmbeddingProvider};
use crate::schema::EntityKind;
use crate::text::{escape_field, unescape_field};

#[derive(Debug, Error)]
pub enum CanonicalError {
    #[error("{0} entities are not disambiguated")]
    InvalidKind(EntityKind),
    #[error("no frequency for surface {0:?}")]
    MissingFrequency(String),
    #[error("{surface:?} is already mapped to {existing:?}, cannot map it to {requested:?}")]
    Conflict {
        surface: String,
        existing: String,
        requested: String,
    },
    #[error("{surface:?} maps to {canonical:?}, which is not canonical itself")]
    Chain { surface: String, canonical: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// Surface → canonical surface for one entity kind. Canonical strings map
/// to themselves; surfaces absent from the map are their own canonical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CanonicalMap {
    kind: EntityKind,
    map: BTreeMap<String, String>,
}

impl CanonicalMap {
    pub fn new(kind: EntityKind) -> Result<Self, CanonicalError> {
        if !kind.is_disambiguated() {
            return Err(CanonicalError::InvalidKind(kind));
        }
        Ok(CanonicalMap {
            kind,
            map: BTreeMap::new(),
        })
    }

    pub fn kind(&self) -> EntityKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    /// Number of surfaces that map to something other than themselves.
    pub fn merged_surfaces(&self) -> usize {
        self.map.iter().filter(|(a, b)| a != b).count()
    }

    pub fn canonical<'a>(&'a self, surface: &'a str) -> &'a str {
        self.map.get(surface).map(String::as_str).unwrap_or(surface)
    }

    /// Map `surface` to `canonical`, keeping the map idempotent.
    pub fn insert(&mut self, surface: &str, canonical: &str) -> Result<(), CanonicalError> {
        if let Some(target) = self.map.get(canonical) {
            if target != canonical {
                return Err(CanonicalError::Chain {
                    surface: surface.to_string(),
                    canonical: canonical.to_string(),
                });
            }
        }
        if surface != canonical && self.map.iter().any(|(s, c)| c == surface && s != surface) {
            return Err(CanonicalError::Chain {
                surface: surface.to_string(),
                canonical: canonical.to_string(),
            });
        }
        if let Some(existing) = self.map.get(surface) {
            if existing != canonical {
                return Err(CanonicalError::Conflict {
                    surface: surface.to_string(),
                    existing: existing.clone(),
                    requested: canonical.to_string(),
                });
            }
        }
        self.map.insert(canonical.to_string(), canonical.to_string());
        self.map.insert(surface.to_string(), canonical.to_string());
        Ok(())
    }

    /// Two-column text form: a `# kind` comment line, then one
    /// `surface<TAB>canonical` line per entry.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("# kind\t{}\n", self.kind);
        for (s, c) in &self.map {
            out.push_str(&format!("{}\t{}\n", escape_field(s), escape_field(c)));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, CanonicalError> {
        let mut lines = text.lines().enumerate();
        let kind = lines
            .next()
            .and_then(|(_, l)| l.strip_prefix("# kind\t"))
            .ok_or(CanonicalError::Parse {
                line: 1,
                message: "expected `# kind<TAB><kind>` header".into(),
            })?
            .parse::<EntityKind>()
            .map_err(|e| CanonicalError::Parse {
                line: 1,
                message: e.to_string(),
            })?;
        let mut map = CanonicalMap::new(kind)?;
        for (n, line) in lines {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| CanonicalError::Parse { line: n + 1, message };
            let (s, c) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected two tab-separated columns".into()))?;
            let s = unescape_field(s).map_err(parse_err)?;
            let c = unescape_field(c).map_err(parse_err)?;
            if s.is_empty() || c.is_empty() {
                return Err(parse_err("empty surface".into()));
            }
            map.insert(&s, &c)?;
        }
        Ok(map)
    }

    pub fn save(&self, path: &Path) -> Result<(), CanonicalError> {
        fs::write(path, self.to_tsv()).map_err(|source| CanonicalError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CanonicalError> {
        let text = fs::read_to_string(path).map_err(|source| CanonicalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_tsv(&text)
    }
}

/// Per cluster, the most frequent surface becomes canonical; ties go to
/// the shorter string, then to the lexicographically smaller one.
pub fn choose_representatives(
    kind: EntityKind,
    clusters: &[Vec<String>],
    frequencies: &BTreeMap<String, usize>,
) -> Result<CanonicalMap, CanonicalError> {
    let mut map = CanonicalMap::new(kind)?;
    for cluster in clusters {
        let mut best: Option<(&String, usize)> = None;
        for s in cluster {
            let f = *frequencies
                .get(s)
                .ok_or_else(|| CanonicalError::MissingFrequency(s.clone()))?;
            let better = match best {
                None => true,
                Some((b, bf)) => {
                    f > bf
                        || (f == bf
                            && (s.chars().count(), s.as_str()) < (b.chars().count(), b.as_str()))
                }
            };
            if better {
                best = Some((s, f));
            }
        }
        if let Some((rep, _)) = best {
            let rep = rep.clone();
            for s in cluster {
                map.insert(s, &rep)?;
            }
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PropagationReport {
    pub renamed: usize,
    pub merged: usize,
}

/// Rename every entity of the map's kind to its canonical surface,
/// merging entities that collide. Other kinds are untouched.
pub fn propagate_canonicalization(graph: &mut GraphStore, map: &CanonicalMap) -> PropagationReport {
    let mut report = PropagationReport::default();
    let targets: Vec<(EntityId, String)> = graph
        .entities_of_kind(map.kind())
        .filter_map(|e| {
            let c = map.canonical(&e.surface);
            (c != e.surface).then(|| (e.entity_id, c.to_string()))
        })
        .collect();
    for (id, canonical) in targets {
        let before = graph.entity_count();
        graph
            .rename_entity(id, &canonical)
            .expect("same-kind rename of an existing entity cannot fail");
        if graph.entity_count() < before {
            report.merged += 1;
        } else {
            report.renamed += 1;
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisambiguationConfig {
    /// At most this many distinct surfaces are clustered; the rest are
    /// attached to the nearest centroid afterwards.
    pub sample_cap: usize,
    pub seed: u64,
    /// Largest cosine distance between two surfaces given one canonical
    /// form. Members farther than a quarter of it from their centroid stay
    /// unmerged.
    pub threshold: f64,
    /// Fixed cluster count; `None` sweeps `2..=k_max` by silhouette.
    pub k: Option<usize>,
    pub k_max: usize,
    pub max_iterations: usize,
}

impl Default for DisambiguationConfig {
    fn default() -> Self {
        DisambiguationConfig {
            sample_cap: 10_000,
            seed: 0,
            threshold: 0.25,
            k: None,
            k_max: 16,
            max_iterations: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DisambiguationReport {
    pub kind: Option<EntityKind>,
    pub surfaces: usize,
    pub sampled: usize,
    pub k: usize,
    pub objective: f64,
    /// Sampled surfaces left unmerged because they sat too far from their centroid.
    pub rejected_members: usize,
    /// Unsampled surfaces attached to a cluster.
    pub extended: usize,
    pub merged_surfaces: usize,
}

/// Cluster the surfaces of one kind and choose representatives.
pub fn disambiguate(
    graph: &GraphStore,
    kind: EntityKind,
    embedder: &dyn EmbeddingProvider,
    config: &DisambiguationConfig,
) -> Result<(CanonicalMap, DisambiguationReport), CanonicalError> {
    let mut map = CanonicalMap::new(kind)?;
    let mut frequencies: BTreeMap<String, usize> = BTreeMap::new();
    for e in graph.entities_of_kind(kind) {
        *frequencies.entry(e.surface.clone()).or_default() += e.provenance.len().max(1);
    }
    let surfaces: Vec<String> = frequencies.keys().cloned().collect();
    let mut report = DisambiguationReport {
        kind: Some(kind),
        surfaces: surfaces.len(),
        ..Default::default()
    };
    if surfaces.len() < 2 {
        return Ok((map, report));
    }

    let sampled: Vec<usize> = if surfaces.len() > config.sample_cap {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut idx = rand::seq::index::sample(&mut rng, surfaces.len(), config.sample_cap).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..surfaces.len()).collect()
    };
    report.sampled = sampled.len();

    let embed = |items: Vec<String>| -> Result<Vec<Vec<f64>>, CanonicalError> {
        if items.is_empty() {
            return Ok(Vec::new());
        }
        Ok(embedder.embed(&items)?.iter().map(|v| v.normalized()).collect())
    };
    let points = embed(sampled.iter().map(|&i| surfaces[i].clone()).collect())?;

    // For unit vectors the squared distance is twice the cosine distance.
    // Points within half that distance of their mean are pairwise within
    // the threshold, which is what a single cluster must guarantee.
    let radius = 2.0 * config.threshold / 4.0;
    let run = match config.k {
        Some(k) => {
            let mut problem = ClusteringProblem::new(points.clone(), k.clamp(1, points.len()), config.seed);
            problem.max_iterations = config.max_iterations;
            kmeans(&problem)?
        }
        None => choose_k(&points, config.k_max, config.seed, radius)?.1,
    };
    report.k = run.centroids.len();
    report.objective = run.objective;

    // Two members within a quarter of the threshold of the centroid are
    // within the threshold of each other (1 - cos 2a <= 4 (1 - cos a)), so
    // no merged pair is farther apart than the threshold.
    let accept = |p: &[f64], c: &[f64]| 1.0 - cosine(p, c) <= config.threshold / 4.0;
    let mut clusters: Vec<Vec<String>> = vec![Vec::new(); run.centroids.len()];
    for (pos, &i) in sampled.iter().enumerate() {
        let c = run.assignments[pos];
        if accept(&points[pos], &run.centroids[c]) {
            clusters[c].push(surfaces[i].clone());
        } else {
            report.rejected_members += 1;
        }
    }
    if sampled.len() < surfaces.len() {
        let rest: Vec<usize> = (0..surfaces.len()).filter(|i| sampled.binary_search(i).is_err()).collect();
        let vectors = embed(rest.iter().map(|&i| surfaces[i].clone()).collect())?;
        for (&i, v) in rest.iter().zip(&vectors) {
            let (c, _) = nearest(v, &run.centroids);
            if accept(v, &run.centroids[c]) {
                clusters[c].push(surfaces[i].clone());
                report.extended += 1;
            }
        }
    }
    clusters.retain(|c| c.len() > 1);
    map = if clusters.is_empty() {
        map
    } else {
        choose_representatives(kind, &clusters, &frequencies)?
    };
    report.merged_surfaces = map.merged_surfaces();
    Ok((map, report))
}
