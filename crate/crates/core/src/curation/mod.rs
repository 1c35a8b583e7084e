//! Entity cleaning and disambiguation.
//!
//! Cleaning judges each extracted element with an [`ErrorDetector`], then
//! deletes it or asks the model to extract it again with the original
//! prompt attached. Disambiguation clusters Task, Dataset and Metric
//! surfaces and rewrites each cluster to its most frequent member.

mod canonical;
mod kmeans;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{
    ask_parsed, parse_reextraction, DumpRecord, EntityCandidate, EntityRef, ExtractionError, Stage,
    Trace,
};
use crate::llm::Gateway;
use crate::schema::EntityKind;

pub use canonical::{
    choose_representatives, disambiguate, propagate_canonicalization, CanonicalError,
    CanonicalMap, DisambiguationConfig, DisambiguationReport, PropagationReport,
};
pub use kmeans::{
    choose_k, kmeans, nearest, objective, silhouette, squared_distance, ClusterError,
    ClusteringProblem, KMeansResult,
};

const DEFAULT_RULES: &str = include_str!("../../assets/lexicons/error_rules.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorLabel {
    InvalidData,
    IncorrectFormatting,
    NotSpecificEnough,
    RedundantInformation,
    Clean,
}

impl ErrorLabel {
    pub const ALL: [ErrorLabel; 5] = [
        ErrorLabel::InvalidData,
        ErrorLabel::IncorrectFormatting,
        ErrorLabel::NotSpecificEnough,
        ErrorLabel::RedundantInformation,
        ErrorLabel::Clean,
    ];

    /// Wording used in the re-extraction prompt.
    pub fn description(self) -> &'static str {
        match self {
            ErrorLabel::InvalidData => "invalid data",
            ErrorLabel::IncorrectFormatting => "incorrect formatting",
            ErrorLabel::NotSpecificEnough => "not specific enough",
            ErrorLabel::RedundantInformation => "redundant information",
            ErrorLabel::Clean => "clean",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurationError {
    #[error("error detector unavailable: {0}")]
    DetectorUnavailable(String),
    #[error("re-extraction failed: {0}")]
    Reextraction(#[from] ExtractionError),
}

/// Pluggable entity judge; [`RuleErrorDetector`] is the default.
pub trait ErrorDetector: Send + Sync {
    fn id(&self) -> &str;
    fn detect(&self, text: &str, kind: EntityKind) -> Result<ErrorLabel, CurationError>;
}

fn is_name_like(kind: EntityKind) -> bool {
    matches!(
        kind,
        EntityKind::Dataset
            | EntityKind::Metric
            | EntityKind::Task
            | EntityKind::Model
            | EntityKind::Keywords
            | EntityKind::Field
            | EntityKind::Conference
    )
}

fn max_words(kind: EntityKind) -> usize {
    match kind {
        EntityKind::Dataset | EntityKind::Metric => 8,
        _ => 12,
    }
}

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '.' || c == '/'))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

fn contains_phrase(haystack: &[String], phrase: &[String]) -> bool {
    !phrase.is_empty() && haystack.windows(phrase.len()).any(|w| w == phrase)
}

/// Lexicon-driven detector. Checks run in order (invalid, formatting,
/// redundant, not specific) and the first hit wins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleErrorDetector {
    placeholders: BTreeSet<String>,
    vague_prefixes: BTreeSet<String>,
    generic: BTreeMap<EntityKind, Vec<Vec<String>>>,
    redundancy_cues: Vec<String>,
}

impl Default for RuleErrorDetector {
    fn default() -> Self {
        Self::from_lexicon(DEFAULT_RULES).expect("shipped rules parse")
    }
}

impl RuleErrorDetector {
    pub fn from_lexicon(text: &str) -> Result<Self, String> {
        let mut detector = RuleErrorDetector {
            placeholders: BTreeSet::new(),
            vague_prefixes: BTreeSet::new(),
            generic: BTreeMap::new(),
            redundancy_cues: Vec::new(),
        };
        let mut section: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(name.to_string());
                continue;
            }
            let entry = line.to_lowercase();
            match section.as_deref() {
                Some("placeholders") => {
                    detector.placeholders.insert(entry);
                }
                Some("vague_prefixes") => {
                    detector.vague_prefixes.insert(entry);
                }
                Some("redundancy_cues") => detector.redundancy_cues.push(raw.trim_start().to_lowercase()),
                Some(s) if s.starts_with("generic:") => {
                    let kind: EntityKind = s["generic:".len()..]
                        .parse()
                        .map_err(|e| format!("line {}: {e}", n + 1))?;
                    detector.generic.entry(kind).or_default().push(words(&entry));
                }
                Some(other) => return Err(format!("line {}: unknown section [{other}]", n + 1)),
                None => return Err(format!("line {}: entry outside a section", n + 1)),
            }
        }
        Ok(detector)
    }

    pub fn label(&self, text: &str, kind: EntityKind) -> ErrorLabel {
        let trimmed = text.trim();
        let bare = trimmed
            .trim_matches(|c: char| c.is_ascii_punctuation() && c != '-')
            .trim()
            .to_lowercase();
        if trimmed.is_empty()
            || !trimmed.chars().any(char::is_alphanumeric)
            || self.placeholders.contains(&bare)
            || self.placeholders.contains(&trimmed.to_lowercase())
        {
            return ErrorLabel::InvalidData;
        }
        if self.badly_formatted(text, kind) {
            return ErrorLabel::IncorrectFormatting;
        }
        let w = words(trimmed);
        if is_name_like(kind) {
            let lower = trimmed.to_lowercase();
            if w.len() > max_words(kind) || self.redundancy_cues.iter().any(|c| lower.contains(c.as_str())) {
                return ErrorLabel::RedundantInformation;
            }
        }
        if kind.is_disambiguated() {
            let first = w.first().map(String::as_str).unwrap_or("");
            let numeric_lead = !first.is_empty() && first.chars().all(|c| c.is_ascii_digit());
            let lowercase_only = !trimmed.chars().any(char::is_uppercase);
            let generic = self
                .generic
                .get(&kind)
                .is_some_and(|list| list.iter().any(|p| contains_phrase(&w, p)));
            if self.vague_prefixes.contains(first) || numeric_lead || (lowercase_only && generic) {
                return ErrorLabel::NotSpecificEnough;
            }
        }
        ErrorLabel::Clean
    }

    fn badly_formatted(&self, text: &str, kind: EntityKind) -> bool {
        let trimmed = text.trim();
        if text != trimmed || trimmed.contains(['\n', '\t', '\r']) || trimmed.contains("  ") {
            return true;
        }
        if ["**", "__", "```", "\\n"].iter().any(|m| trimmed.contains(m)) {
            return true;
        }
        let balanced = |open: char, close: char| {
            trimmed.chars().filter(|&c| c == open).count() == trimmed.chars().filter(|&c| c == close).count()
        };
        if !balanced('(', ')') || !balanced('[', ']') || !balanced('{', '}') {
            return true;
        }
        let quote = |c: char| matches!(c, '"' | '\'' | '`');
        let first = trimmed.chars().next().unwrap_or(' ');
        let last = trimmed.chars().last().unwrap_or(' ');
        if quote(first) || quote(last) || trimmed.ends_with([',', ';', ':']) {
            return true;
        }
        if trimmed.starts_with(['-', '*', '•']) && trimmed.chars().nth(1) == Some(' ') {
            return true;
        }
        // A key echoed into the value, e.g. `Dataset: SQuAD`.
        if let Some((key, _)) = trimmed.split_once(':') {
            let key = key.trim().trim_matches(quote).to_lowercase();
            if key.parse::<EntityKind>().is_ok() && kind != EntityKind::Title {
                return true;
            }
        }
        false
    }
}

impl ErrorDetector for RuleErrorDetector {
    fn id(&self) -> &str {
        "rules"
    }

    fn detect(&self, text: &str, kind: EntityKind) -> Result<ErrorLabel, CurationError> {
        Ok(self.label(text, kind))
    }
}

/// An element under judgement, with the prompt that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgedEntity {
    pub kind: EntityKind,
    pub surface: String,
    pub corpus_id: String,
    pub original_prompt: String,
    pub original_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReextractBundle {
    pub kind: EntityKind,
    pub error_text: String,
    pub label: ErrorLabel,
    pub original_prompt: String,
    pub original_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepairAction {
    Keep,
    Delete,
    Reextract(ReextractBundle),
}

/// Invalid data is deleted, clean data kept, anything else re-extracted.
pub fn apply_repair_policy(entity: &JudgedEntity, label: ErrorLabel) -> RepairAction {
    match label {
        ErrorLabel::Clean => RepairAction::Keep,
        ErrorLabel::InvalidData => RepairAction::Delete,
        ErrorLabel::IncorrectFormatting
        | ErrorLabel::NotSpecificEnough
        | ErrorLabel::RedundantInformation => RepairAction::Reextract(ReextractBundle {
            kind: entity.kind,
            error_text: entity.surface.clone(),
            label,
            original_prompt: entity.original_prompt.clone(),
            original_digest: entity.original_digest.clone(),
        }),
    }
}

/// Ask for a corrected value. `None` means the model found no valid value.
pub fn reextract(
    gateway: &Gateway,
    bundle: &ReextractBundle,
    max_reasks: u32,
) -> Result<(Option<String>, usize), CurationError> {
    let request = gateway
        .request("reextract")
        .slot("kind", bundle.kind.label())
        .slot("error_text", &bundle.error_text)
        .slot("error_type", bundle.label.description())
        .slot("original_prompt", &bundle.original_prompt);
    let mut trace = Trace::default();
    let stage = Stage::producing(bundle.kind);
    let value = ask_parsed(gateway, max_reasks, stage, request, parse_reextraction, &mut trace)?;
    Ok((value, trace.calls))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CleanReport {
    pub judged: usize,
    pub labels: BTreeMap<String, usize>,
    pub deleted: usize,
    pub repaired: usize,
    /// Re-extractions that came back empty or still erroneous.
    pub dropped: usize,
    pub calls: usize,
    /// One line per non-clean entity: corpus id, kind, old value, outcome.
    pub actions: Vec<String>,
}

/// Clean the element entities of a candidate dump. Metadata entities are
/// never judged. Repaired values replace the old surface in every triple
/// of the same paper; deleted values take their triples with them.
pub fn clean_candidates(
    records: &[DumpRecord],
    detector: &dyn ErrorDetector,
    gateway: &Gateway,
    max_reasks: u32,
) -> Result<(Vec<DumpRecord>, CleanReport), CurationError> {
    let mut report = CleanReport::default();
    let prompts: BTreeMap<(String, Stage), (String, String)> = records
        .iter()
        .filter_map(|r| match r {
            DumpRecord::Stage(s) => Some((
                (s.corpus_id.clone(), s.stage),
                (s.prompt.clone()?, s.prompt_digest.clone()?),
            )),
            _ => None,
        })
        .collect();

    // (corpus_id, kind, old surface) -> replacement (None = delete)
    let mut edits: BTreeMap<(String, EntityKind, String), Option<String>> = BTreeMap::new();
    for record in records {
        let DumpRecord::Entity(e) = record else { continue };
        if e.kind.is_metadata() {
            continue;
        }
        report.judged += 1;
        let label = detector.detect(&e.surface, e.kind)?;
        *report.labels.entry(format!("{label:?}")).or_default() += 1;
        let key = (e.corpus_id.clone(), e.kind, e.surface.clone());
        let (prompt, digest) = prompts
            .get(&(e.corpus_id.clone(), Stage::producing(e.kind)))
            .cloned()
            .unwrap_or_default();
        let judged = JudgedEntity {
            kind: e.kind,
            surface: e.surface.clone(),
            corpus_id: e.corpus_id.clone(),
            original_prompt: prompt,
            original_digest: digest,
        };
        let outcome = match apply_repair_policy(&judged, label) {
            RepairAction::Keep => continue,
            RepairAction::Delete => {
                report.deleted += 1;
                None
            }
            RepairAction::Reextract(bundle) if bundle.original_prompt.is_empty() => {
                report.dropped += 1;
                None
            }
            RepairAction::Reextract(bundle) => {
                let (value, calls) = reextract(gateway, &bundle, max_reasks)?;
                report.calls += calls;
                match value {
                    Some(v) if detector.detect(&v, e.kind)? == ErrorLabel::Clean => {
                        report.repaired += 1;
                        Some(v)
                    }
                    _ => {
                        report.dropped += 1;
                        None
                    }
                }
            }
        };
        report.actions.push(format!(
            "{}\t{}\t{:?}\t{:?}\t{}",
            e.corpus_id,
            e.kind,
            e.surface,
            label,
            outcome.as_deref().map(|v| format!("-> {v:?}")).unwrap_or_else(|| "deleted".into())
        ));
        edits.insert(key, outcome);
    }

    let edit_for = |corpus_id: &str, r: &EntityRef| -> Option<Option<String>> {
        if r.kind.is_metadata() {
            return None;
        }
        edits.get(&(corpus_id.to_string(), r.kind, r.surface.clone())).cloned()
    };
    let mut out: Vec<DumpRecord> = Vec::with_capacity(records.len());
    for record in records {
        let next = match record {
            DumpRecord::Stage(_) => Some(record.clone()),
            DumpRecord::Entity(e) => {
                match edits.get(&(e.corpus_id.clone(), e.kind, e.surface.clone())) {
                    None => Some(record.clone()),
                    Some(None) => None,
                    Some(Some(v)) => Some(DumpRecord::Entity(EntityCandidate {
                        surface: v.clone(),
                        ..e.clone()
                    })),
                }
            }
            DumpRecord::Triple(t) => {
                let mut t = t.clone();
                let mut keep = true;
                for end in [&mut t.subject, &mut t.object] {
                    match edit_for(&t.corpus_id, end) {
                        None => {}
                        Some(None) => keep = false,
                        Some(Some(v)) => end.surface = v,
                    }
                }
                keep.then_some(DumpRecord::Triple(t))
            }
        };
        if let Some(next) = next {
            if !out.contains(&next) {
                out.push(next);
            }
        }
    }
    Ok((out, report))
}
