//! Stage orchestration shared by the CLI, the service and the tests.
//!
//! Each stage function takes its inputs explicitly (corpus, gateway,
//! embedder, settings) so the same code runs under the fixture backend,
//! a scripted backend or a live endpoint.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use akg_core::corpus::{validate_corpus, Corpus, CorpusReport};
use akg_core::curation::{
    clean_candidates, disambiguate, propagate_canonicalization, CanonicalMap, CleanReport,
    DisambiguationConfig, DisambiguationReport, PropagationReport, RuleErrorDetector,
};
use akg_core::extraction::{
    citation_candidates, extract_corpus, DumpRecord, Extractor, RuleCitationClassifier,
};
use akg_core::graph::{import_candidates, BuildMetadata, GraphStore, ImportReport};
use akg_core::llm::{
    EmbeddingProvider, FixtureBackend, FixtureMode, Gateway, HashedTrigramEmbedder, LiveBackend,
    LiveConfig, LiveEmbedder, CATALOG_VERSION,
};

use crate::config::{BackendKind, Config, DisambiguationSettings};

/// Version string stamped into every snapshot.
pub fn pipeline_version() -> String {
    format!("akg-{}+{}", env!("CARGO_PKG_VERSION"), CATALOG_VERSION)
}

/// A failure tagged with the pipeline stage it happened in.
#[derive(Debug, Error)]
#[error("stage {stage}: {message}")]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

impl StageError {
    pub fn new(stage: &'static str, message: impl std::fmt::Display) -> Self {
        StageError {
            stage,
            message: message.to_string(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Build the completion gateway the configuration asks for.
pub fn make_gateway(config: &Config) -> Result<Gateway, StageError> {
    let gateway = match config.backend {
        BackendKind::Mock => {
            let dir = config.fixtures.as_ref().ok_or_else(|| {
                StageError::new("backend", "the mock backend needs a fixtures directory (--fixtures)")
            })?;
            if !dir.is_dir() {
                return Err(StageError::new(
                    "backend",
                    format!("fixtures directory {} does not exist", dir.display()),
                ));
            }
            Gateway::new(Arc::new(FixtureBackend::from_dir(dir.clone(), FixtureMode::Strict)))
        }
        BackendKind::Live => {
            let live = LiveConfig::from_env()
                .ok_or_else(|| StageError::new("backend", "the live backend needs AKG_LLM_URL"))?;
            Gateway::new(Arc::new(
                LiveBackend::new(live).map_err(|e| StageError::new("backend", e))?,
            ))
        }
    };
    Ok(gateway.with_parallelism(config.parallelism))
}

pub fn make_embedder(config: &Config) -> Result<Box<dyn EmbeddingProvider>, StageError> {
    match config.embedder {
        BackendKind::Mock => Ok(Box::new(HashedTrigramEmbedder)),
        BackendKind::Live => match LiveEmbedder::from_env() {
            Some(Ok(e)) => Ok(Box::new(e)),
            Some(Err(e)) => Err(StageError::new("embedder", e)),
            None => Err(StageError::new("embedder", "the live embedder needs AKG_EMB_URL")),
        },
    }
}

/// Corpus with citations resolved, its validation report and the hash of
/// the file it came from.
#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub report: CorpusReport,
    pub sha256: String,
    pub newly_resolved: usize,
}

pub fn load_corpus(path: &Path) -> Result<LoadedCorpus, StageError> {
    let bytes = std::fs::read(path)
        .map_err(|e| StageError::new("ingest", format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| StageError::new("ingest", format!("{} is not UTF-8", path.display())))?;
    let mut corpus = Corpus::parse(&text).map_err(|e| StageError::new("ingest", e))?;
    let report = validate_corpus(&corpus.records);
    if !report.is_clean() {
        return Err(StageError::new(
            "ingest",
            format!(
                "corpus is not valid: duplicate ids {:?}, {} dangling citation link(s)",
                report.duplicate_ids, report.dangling_citations
            ),
        ));
    }
    let newly_resolved = corpus.resolve_citations();
    Ok(LoadedCorpus {
        corpus,
        report,
        sha256: sha256_hex(&bytes),
        newly_resolved,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExtractSummary {
    pub papers: usize,
    pub calls: usize,
    pub calls_by_stage: BTreeMap<String, usize>,
    pub entity_candidates: usize,
    pub triple_candidates: usize,
}

/// Run extraction over the corpus. Any paper failure fails the stage; the
/// message names every failing paper and its stage.
pub fn extract(corpus: &Corpus, gateway: &Gateway, max_reasks: u32) -> Result<(Vec<DumpRecord>, ExtractSummary), StageError> {
    let classifier = RuleCitationClassifier::default();
    let mut extractor = Extractor::new(gateway, &classifier);
    extractor.max_reasks = max_reasks;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut summary = ExtractSummary::default();
    for outcome in extract_corpus(&extractor, corpus) {
        match outcome {
            Ok(paper) => {
                summary.papers += 1;
                for s in &paper.stages {
                    *summary.calls_by_stage.entry(s.stage.name().to_string()).or_default() += s.calls;
                    summary.calls += s.calls;
                }
                summary.entity_candidates += paper.entities.len();
                summary.triple_candidates += paper.triples.len() + paper.inter_paper.len();
                records.extend(paper.records());
            }
            Err(failure) => failures.push(failure.to_string()),
        }
    }
    if !failures.is_empty() {
        return Err(StageError::new("extract", failures.join("; ")));
    }
    Ok((records, summary))
}

pub fn clean(records: &[DumpRecord], gateway: &Gateway, max_reasks: u32) -> Result<(Vec<DumpRecord>, CleanReport), StageError> {
    clean_candidates(records, &RuleErrorDetector::default(), gateway, max_reasks)
        .map_err(|e| StageError::new("clean", e))
}

pub fn import(records: &[DumpRecord]) -> (GraphStore, ImportReport) {
    let mut graph = GraphStore::new();
    let report = import_candidates(&mut graph, records);
    (graph, report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KindDisambiguation {
    pub report: DisambiguationReport,
    pub propagation: PropagationReport,
    #[serde(skip)]
    pub map: CanonicalMap,
}

/// Cluster and canonicalize each configured kind in turn.
pub fn disambiguate_graph(
    graph: &mut GraphStore,
    embedder: &dyn EmbeddingProvider,
    settings: &DisambiguationSettings,
) -> Result<Vec<KindDisambiguation>, StageError> {
    let config = DisambiguationConfig {
        sample_cap: settings.sample_cap,
        seed: settings.seed,
        threshold: settings.threshold,
        k_max: settings.k_max,
        ..DisambiguationConfig::default()
    };
    let mut out = Vec::new();
    for &kind in &settings.kinds {
        let (map, report) =
            disambiguate(graph, kind, embedder, &config).map_err(|e| StageError::new("disambiguate", e))?;
        let propagation = propagate_canonicalization(graph, &map);
        out.push(KindDisambiguation {
            report,
            propagation,
            map,
        });
    }
    Ok(out)
}

/// Add inter-paper relations from the corpus's resolved citations.
pub fn link_citations(graph: &mut GraphStore, corpus: &Corpus) -> Result<ImportReport, StageError> {
    let classifier = RuleCitationClassifier::default();
    let mut records = Vec::new();
    for record in &corpus.records {
        let candidates =
            citation_candidates(record, &classifier).map_err(|e| StageError::new("link-citations", e))?;
        records.extend(candidates.into_iter().map(DumpRecord::Triple));
    }
    Ok(import_candidates(graph, &records))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub millis: u128,
}

#[derive(Debug, Clone, Serialize)]
pub struct BuildReport {
    pub corpus: CorpusReport,
    pub extract: ExtractSummary,
    pub clean: CleanReport,
    pub import: ImportReport,
    pub disambiguation: Vec<KindDisambiguation>,
    pub timings: Vec<StageTiming>,
}

fn timed<T>(timings: &mut Vec<StageTiming>, stage: &str, f: impl FnOnce() -> T) -> T {
    let started = Instant::now();
    let value = f();
    timings.push(StageTiming {
        stage: stage.to_string(),
        millis: started.elapsed().as_millis(),
    });
    value
}

/// Full pipeline: extraction, cleaning, import, disambiguation.
pub fn build(
    loaded: &LoadedCorpus,
    gateway: &Gateway,
    embedder: &dyn EmbeddingProvider,
    config: &Config,
) -> Result<(GraphStore, BuildReport), StageError> {
    let mut timings = Vec::new();
    let (candidates, extract_summary) =
        timed(&mut timings, "extract", || extract(&loaded.corpus, gateway, config.max_reasks))?;
    let (cleaned, clean_report) =
        timed(&mut timings, "clean", || clean(&candidates, gateway, config.max_reasks))?;
    let (mut graph, import_report) = timed(&mut timings, "import", || import(&cleaned));
    let disambiguation = timed(&mut timings, "disambiguate", || {
        disambiguate_graph(&mut graph, embedder, &config.disambiguation)
    })?;
    graph.set_metadata(BuildMetadata {
        corpus_hash: loaded.sha256.clone(),
        pipeline_version: pipeline_version(),
    });
    graph
        .check_integrity()
        .map_err(|e| StageError::new("build", format!("integrity check failed: {e}")))?;
    Ok((
        graph,
        BuildReport {
            corpus: loaded.report.clone(),
            extract: extract_summary,
            clean: clean_report,
            import: import_report,
            disambiguation,
            timings,
        },
    ))
}
