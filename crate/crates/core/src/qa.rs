//! Question answering over the graph by sub-graph community summaries.
//!
//! `ask` runs intent identification, resolves the question's elements to
//! graph entities, walks from them to their papers' titles and on to the
//! target elements, groups the titles into communities connected by
//! inter-paper relations, answers each community and summarizes the
//! answers. Without any inter-paper relation the retrieved elements are
//! answered in one direct call instead.
//!
//! Path resolution uses only exact lookups and adjacency walks; the graph
//! is never scanned unless the embedding fallback is switched on.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EntityId, GraphError, GraphStore, Triple};
use crate::llm::{
    cosine, CompletionRequest, CompletionResult, EmbedError, EmbeddingProvider, Gateway,
    GatewayError, LedgerEntry,
};
use crate::schema::{path_from_title, path_to_title, EntityKind};
use crate::text::{squash_whitespace, truncate_chars};

/// Kinds the intent prompt may assign to question elements.
pub const INTENT_KINDS: [EntityKind; 7] = [
    EntityKind::Title,
    EntityKind::Task,
    EntityKind::Field,
    EntityKind::Method,
    EntityKind::Problem,
    EntityKind::Model,
    EntityKind::Dataset,
];

pub const DEFAULT_CONTEXT_CAP: usize = 8_000;
pub const DEFAULT_FALLBACK_THRESHOLD: f64 = 0.85;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaStage {
    Intent,
    Match,
    Retrieve,
    Community,
    Global,
    Direct,
    Unguided,
}

impl fmt::Display for QaStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            QaStage::Intent => "intent",
            QaStage::Match => "match",
            QaStage::Retrieve => "retrieve",
            QaStage::Community => "community",
            QaStage::Global => "global",
            QaStage::Direct => "direct",
            QaStage::Unguided => "unguided",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QaError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("intent: unparseable output after {attempts} attempt(s): {message}")]
    UnparseableIntent {
        attempts: u32,
        message: String,
        output: String,
    },
    #[error("no question element matched the graph (tried {attempted:?})")]
    NoMatches { attempted: Vec<String> },
    #[error("{stage}: completion failed: {source}")]
    Completion {
        stage: QaStage,
        #[source]
        source: GatewayError,
    },
    #[error("{stage}: {source}")]
    Graph {
        stage: QaStage,
        #[source]
        source: GraphError,
    },
    #[error("match: embedding fallback failed: {0}")]
    Embedding(#[from] EmbedError),
}

impl QaError {
    pub fn stage(&self) -> QaStage {
        match self {
            QaError::EmptyQuestion | QaError::UnparseableIntent { .. } => QaStage::Intent,
            QaError::NoMatches { .. } | QaError::Embedding(_) => QaStage::Match,
            QaError::Completion { stage, .. } | QaError::Graph { stage, .. } => *stage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntentElement {
    pub surface: String,
    pub kind: EntityKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intent {
    pub question: String,
    pub relevant_elements: Vec<IntentElement>,
    pub target_kind: EntityKind,
}

static ENTITIES_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^\s*[-*]?\s*entities\s*:\s*(.*)$").expect("valid regex"));
static QUESTION_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^\s*[-*]?\s*question\s*:\s*(.*)$").expect("valid regex"));
static ELEMENT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\s*,?\s*([^()]+?)\s*\(\s*([A-Za-z ]+?)\s*\)\s*(?:,|$)").expect("valid regex")
});

fn kind_from_label(label: &str) -> Option<EntityKind> {
    let label = label
        .trim()
        .trim_matches(|c: char| c.is_ascii_punctuation())
        .to_lowercase();
    let find = |l: &str| EntityKind::ALL.into_iter().find(|k| k.label() == l);
    find(&label).or_else(|| label.strip_suffix('s').and_then(find))
}

/// Parse the two-line intent answer. The question text is filled in by
/// the caller.
pub fn parse_intent(output: &str) -> Result<(Vec<IntentElement>, EntityKind), String> {
    let entities = ENTITIES_LINE
        .captures(output)
        .ok_or("missing `Entities:` line")?[1]
        .trim()
        .to_string();
    let target_label = QUESTION_LINE
        .captures(output)
        .ok_or("missing `Question:` line")?[1]
        .trim()
        .to_string();
    let target_kind = kind_from_label(&target_label)
        .ok_or_else(|| format!("unknown target category `{target_label}`"))?;

    let mut elements: Vec<IntentElement> = Vec::new();
    for caps in ELEMENT.captures_iter(&entities) {
        let surface = squash_whitespace(&caps[1]);
        let Some(kind) = kind_from_label(&caps[2]).filter(|k| INTENT_KINDS.contains(k)) else {
            continue;
        };
        let element = IntentElement { surface, kind };
        if !element.surface.is_empty() && !elements.contains(&element) {
            elements.push(element);
        }
    }
    if elements.is_empty() {
        return Err(format!(
            "no `surface (category)` entries with a category among {} in `{entities}`",
            INTENT_KINDS.map(|k| k.label()).join(", ")
        ));
    }
    Ok((elements, target_kind))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedElement {
    pub element: IntentElement,
    pub entity_ids: Vec<EntityId>,
    /// True when the ids came from the embedding fallback.
    pub fuzzy: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub matched: Vec<MatchedElement>,
    pub unmatched: Vec<IntentElement>,
}

impl MatchOutcome {
    /// Distinct matched ids in ascending order.
    pub fn ids(&self) -> Vec<EntityId> {
        self.matched
            .iter()
            .flat_map(|m| m.entity_ids.iter().copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetElement {
    pub entity_id: EntityId,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitleElements {
    pub title: String,
    pub targets: Vec<TargetElement>,
    pub introductions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubGraphBundle {
    pub target_kind: EntityKind,
    pub titles: BTreeMap<EntityId, TitleElements>,
    pub matched_source_ids: Vec<EntityId>,
}

impl SubGraphBundle {
    pub fn is_empty(&self) -> bool {
        self.titles.is_empty()
    }

    pub fn title_ids(&self) -> BTreeSet<EntityId> {
        self.titles.keys().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Community {
    pub title_ids: Vec<EntityId>,
    pub internal_edges: Vec<Triple>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMode {
    Community,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityAnswer {
    pub community: usize,
    pub text: String,
    pub digest: String,
}

/// A completion's answer plus what went into it.
#[derive(Debug, Clone, PartialEq)]
pub struct Answered {
    pub text: String,
    pub truncated: bool,
    pub result: CompletionResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerTrace {
    pub question: String,
    pub intent: Option<Intent>,
    pub matches: MatchOutcome,
    pub bundle: Option<SubGraphBundle>,
    pub communities: Vec<Community>,
    pub community_answers: Vec<CommunityAnswer>,
    pub global_answer: String,
    pub mode: AnswerMode,
    /// Set when nothing in the graph supported the answer.
    pub unguided: bool,
    /// Set when a prompt's context had to be cut to fit the cap.
    pub truncated: bool,
    pub ledger: Vec<LedgerEntry>,
}

impl AnswerTrace {
    pub fn answer(&self) -> &str {
        &self.global_answer
    }

    pub fn completions(&self) -> usize {
        self.ledger.len()
    }
}

/// Answering engine over one immutable graph.
pub struct QaEngine<'a> {
    pub gateway: &'a Gateway,
    pub graph: &'a GraphStore,
    pub max_reasks: u32,
    /// Character cap per answering prompt.
    pub context_cap: usize,
    /// Embedding provider for the similarity fallback of entity matching.
    pub fallback: Option<&'a dyn EmbeddingProvider>,
    pub fallback_threshold: f64,
}

fn ledger_entry(result: &CompletionResult) -> LedgerEntry {
    LedgerEntry {
        template_id: result.template_id.clone(),
        digest: result.digest.clone(),
        backend_id: result.backend_id.clone(),
        prompt: result.prompt.clone(),
    }
}

/// Union-find over dense indices with path halving.
struct DisjointSets(Vec<usize>);

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        // Root at the smaller index so roots follow title order.
        if ra < rb {
            self.0[rb] = ra;
        } else if rb < ra {
            self.0[ra] = rb;
        }
    }
}

/// Connected components of the bundle's titles under inter-paper edges
/// between them, ordered by smallest title id.
pub fn form_communities(
    bundle: &SubGraphBundle,
    graph: &GraphStore,
) -> Result<Vec<Community>, GraphError> {
    let titles: Vec<EntityId> = bundle.titles.keys().copied().collect();
    let index: BTreeMap<EntityId, usize> = titles.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let edges = graph.inter_paper_edges(&bundle.title_ids())?;
    let mut sets = DisjointSets::new(titles.len());
    for e in &edges {
        sets.union(index[&e.subject], index[&e.object]);
    }
    let mut groups: BTreeMap<usize, Community> = BTreeMap::new();
    for (i, &t) in titles.iter().enumerate() {
        let root = sets.find(i);
        groups
            .entry(root)
            .or_insert_with(|| Community {
                title_ids: Vec::new(),
                internal_edges: Vec::new(),
            })
            .title_ids
            .push(t);
    }
    for e in edges {
        let root = sets.find(index[&e.subject]);
        groups.get_mut(&root).expect("root exists").internal_edges.push(e);
    }
    // Roots are the smallest index in their set, and titles are sorted.
    Ok(groups.into_values().collect())
}

impl<'a> QaEngine<'a> {
    pub fn new(gateway: &'a Gateway, graph: &'a GraphStore) -> Self {
        QaEngine {
            gateway,
            graph,
            max_reasks: 2,
            context_cap: DEFAULT_CONTEXT_CAP,
            fallback: None,
            fallback_threshold: DEFAULT_FALLBACK_THRESHOLD,
        }
    }

    fn complete(
        &self,
        stage: QaStage,
        request: &CompletionRequest,
        ledger: &mut Vec<LedgerEntry>,
    ) -> Result<CompletionResult, QaError> {
        let result = self
            .gateway
            .complete(request)
            .map_err(|source| QaError::Completion { stage, source })?;
        ledger.push(ledger_entry(&result));
        Ok(result)
    }

    pub fn identify_intent(&self, question: &str) -> Result<Intent, QaError> {
        self.identify_intent_traced(question, &mut Vec::new())
    }

    fn identify_intent_traced(
        &self,
        question: &str,
        ledger: &mut Vec<LedgerEntry>,
    ) -> Result<Intent, QaError> {
        let question = question.trim();
        if question.is_empty() {
            return Err(QaError::EmptyQuestion);
        }
        let mut request = self.gateway.request("intent").slot("question", question);
        for attempt in 0..=self.max_reasks {
            let result = self.complete(QaStage::Intent, &request, ledger)?;
            match parse_intent(&result.text) {
                Ok((relevant_elements, target_kind)) => {
                    return Ok(Intent {
                        question: question.to_string(),
                        relevant_elements,
                        target_kind,
                    })
                }
                Err(message) if attempt == self.max_reasks => {
                    return Err(QaError::UnparseableIntent {
                        attempts: attempt + 1,
                        message,
                        output: result.text,
                    })
                }
                Err(message) => request.feedback.push(format!(
                    "Your previous answer could not be used: {message}.\nPrevious answer:\n{}\nAnswer again with an `Entities:` line and a `Question:` line.",
                    result.text
                )),
            }
        }
        unreachable!("loop returns on its last iteration")
    }

    /// Resolve each relevant element to entities of its declared kind.
    pub fn match_entities(&self, intent: &Intent) -> Result<MatchOutcome, QaError> {
        let mut outcome = MatchOutcome::default();
        for element in &intent.relevant_elements {
            let mut ids = self.graph.find_normalized(element.kind, &element.surface);
            let mut fuzzy = false;
            if ids.is_empty() {
                if let Some(embedder) = self.fallback {
                    ids = self.similar(embedder, element)?;
                    fuzzy = !ids.is_empty();
                }
            }
            if ids.is_empty() {
                outcome.unmatched.push(element.clone());
            } else {
                outcome.matched.push(MatchedElement {
                    element: element.clone(),
                    entity_ids: ids,
                    fuzzy,
                });
            }
        }
        if outcome.matched.is_empty() {
            return Err(QaError::NoMatches {
                attempted: intent
                    .relevant_elements
                    .iter()
                    .map(|e| format!("{} ({})", e.surface, e.kind.label()))
                    .collect(),
            });
        }
        Ok(outcome)
    }

    /// Entities of the element's kind whose surface embedding is within the
    /// fallback threshold. This reads every entity of that kind.
    fn similar(
        &self,
        embedder: &dyn EmbeddingProvider,
        element: &IntentElement,
    ) -> Result<Vec<EntityId>, QaError> {
        let candidates: Vec<(EntityId, String)> = self
            .graph
            .entities_of_kind(element.kind)
            .map(|e| (e.entity_id, e.surface.clone()))
            .collect();
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        let mut texts = vec![element.surface.clone()];
        texts.extend(candidates.iter().map(|(_, s)| s.clone()));
        let vectors = embedder.embed(&texts)?;
        let query = vectors[0].normalized();
        Ok(candidates
            .iter()
            .zip(&vectors[1..])
            .filter(|(_, v)| cosine(&query, &v.normalized()) >= self.fallback_threshold)
            .map(|((id, _), _)| *id)
            .collect())
    }

    /// Titles reachable from the matched entities and, per title, the
    /// elements of the target kind attached to it.
    pub fn retrieve_subgraph(
        &self,
        matched: &[EntityId],
        target_kind: EntityKind,
    ) -> Result<SubGraphBundle, QaError> {
        let graph_err = |source| QaError::Graph {
            stage: QaStage::Retrieve,
            source,
        };
        let mut bundle = SubGraphBundle {
            target_kind,
            titles: BTreeMap::new(),
            matched_source_ids: matched.to_vec(),
        };
        let mut titles = BTreeSet::new();
        for &id in matched {
            let kind = self
                .graph
                .entity(id)
                .ok_or(GraphError::UnknownEntity(id))
                .map_err(graph_err)?
                .kind;
            let Ok(up) = path_to_title(kind) else { continue };
            titles.extend(self.graph.walk_path(id, &up).map_err(graph_err)?);
        }
        let down = path_from_title(target_kind).ok();
        for title in titles {
            let targets = match (&down, target_kind) {
                (_, EntityKind::Title) => vec![title],
                (Some(path), _) => self.graph.walk_path(title, path).map_err(graph_err)?,
                (None, _) => Vec::new(),
            };
            if targets.is_empty() {
                continue;
            }
            let targets: Vec<TargetElement> = targets
                .into_iter()
                .filter_map(|id| {
                    self.graph.entity(id).map(|e| TargetElement {
                        entity_id: id,
                        surface: e.surface.clone(),
                    })
                })
                .collect();
            let mut introductions = vec![EntityKind::Title.introduction().to_string()];
            if target_kind != EntityKind::Title {
                introductions.push(target_kind.introduction().to_string());
            }
            introductions.extend(
                targets
                    .iter()
                    .map(|t| format!("{} is a {}.", t.surface, target_kind.label())),
            );
            let surface = self
                .graph
                .entity(title)
                .map(|e| e.surface.clone())
                .unwrap_or_default();
            bundle.titles.insert(
                title,
                TitleElements {
                    title: surface,
                    targets,
                    introductions,
                },
            );
        }
        Ok(bundle)
    }

    fn title_block(bundle: &SubGraphBundle, title: EntityId) -> String {
        let entry = &bundle.titles[&title];
        let mut block = format!("Title: {}", entry.title);
        for t in &entry.targets {
            block.push_str(&format!("\n- {}: {}", bundle.target_kind.label(), t.surface));
        }
        block
    }

    fn introductions(bundle: &SubGraphBundle, titles: &[EntityId]) -> String {
        let mut seen = BTreeSet::new();
        let mut lines = Vec::new();
        for t in titles {
            for line in &bundle.titles[t].introductions {
                if seen.insert(line.as_str()) {
                    lines.push(line.as_str());
                }
            }
        }
        lines.join("\n")
    }

    /// Render `template_id` with the element blocks in `slot`, cutting each
    /// block evenly when the prompt would exceed the context cap.
    fn capped_request(
        &self,
        stage: QaStage,
        slot: &str,
        blocks: &[String],
        extra: &str,
        fixed: CompletionRequest,
    ) -> Result<(CompletionRequest, bool), QaError> {
        let join = |blocks: &[String]| {
            let mut text = blocks.join("\n\n");
            if !extra.is_empty() {
                text.push_str("\n\n");
                text.push_str(extra);
            }
            text
        };
        let full = fixed.clone().slot(slot, join(blocks));
        let err = |source| QaError::Completion { stage, source };
        let length = self.gateway.prompt_for(&full).map_err(err)?.chars().count();
        if length <= self.context_cap || blocks.is_empty() {
            return Ok((full, false));
        }
        let base = self
            .gateway
            .prompt_for(&fixed.clone().slot(slot, join(&[])))
            .map_err(err)?
            .chars()
            .count();
        let separators = 2 * blocks.len();
        let budget = self.context_cap.saturating_sub(base + separators) / blocks.len();
        let cut: Vec<String> = blocks
            .iter()
            .map(|b| truncate_chars(b, budget).to_string())
            .collect();
        Ok((fixed.slot(slot, join(&cut)), true))
    }

    /// One completion over the question, the community's elements, their
    /// introductions and the community-answer instructions, in that order.
    pub fn answer_community(
        &self,
        question: &str,
        community: &Community,
        bundle: &SubGraphBundle,
    ) -> Result<Answered, QaError> {
        let blocks: Vec<String> = community
            .title_ids
            .iter()
            .map(|&t| Self::title_block(bundle, t))
            .collect();
        let relations: Vec<String> = community
            .internal_edges
            .iter()
            .map(|e| {
                format!(
                    "Relation: {} -> {} -> {}",
                    bundle.titles[&e.subject].title,
                    e.relation.display_name(),
                    bundle.titles[&e.object].title
                )
            })
            .collect();
        let fixed = self
            .gateway
            .request("community_answer")
            .slot("question", question)
            .slot("introductions", Self::introductions(bundle, &community.title_ids));
        let (request, truncated) = self.capped_request(
            QaStage::Community,
            "community",
            &blocks,
            &relations.join("\n"),
            fixed,
        )?;
        let result = self
            .gateway
            .complete(&request)
            .map_err(|source| QaError::Completion {
                stage: QaStage::Community,
                source,
            })?;
        Ok(Answered {
            text: result.text.trim().to_string(),
            truncated,
            result,
        })
    }

    /// One completion over every community answer followed by the question.
    pub fn answer_global(&self, question: &str, answers: &[String]) -> Result<Answered, QaError> {
        let partial = answers
            .iter()
            .enumerate()
            .map(|(i, a)| format!("Community {}:\n{}", i + 1, a))
            .collect::<Vec<_>>()
            .join("\n\n");
        let request = self
            .gateway
            .request("global_answer")
            .slot("community_answers", partial)
            .slot("question", question);
        let result = self
            .gateway
            .complete(&request)
            .map_err(|source| QaError::Completion {
                stage: QaStage::Global,
                source,
            })?;
        Ok(Answered {
            text: result.text.trim().to_string(),
            truncated: false,
            result,
        })
    }

    /// One completion over every retrieved element, for bundles without any
    /// inter-paper relation.
    pub fn answer_direct(&self, question: &str, bundle: &SubGraphBundle) -> Result<Answered, QaError> {
        let titles: Vec<EntityId> = bundle.titles.keys().copied().collect();
        let blocks: Vec<String> = titles.iter().map(|&t| Self::title_block(bundle, t)).collect();
        let fixed = self
            .gateway
            .request("direct_answer")
            .slot("question", question)
            .slot("introductions", Self::introductions(bundle, &titles));
        let (request, truncated) =
            self.capped_request(QaStage::Direct, "elements", &blocks, "", fixed)?;
        let result = self
            .gateway
            .complete(&request)
            .map_err(|source| QaError::Completion {
                stage: QaStage::Direct,
                source,
            })?;
        Ok(Answered {
            text: result.text.trim().to_string(),
            truncated,
            result,
        })
    }

    fn answer_unguided(&self, question: &str) -> Result<Answered, QaError> {
        let request = self.gateway.request("unguided_answer").slot("question", question);
        let result = self
            .gateway
            .complete(&request)
            .map_err(|source| QaError::Completion {
                stage: QaStage::Unguided,
                source,
            })?;
        Ok(Answered {
            text: result.text.trim().to_string(),
            truncated: false,
            result,
        })
    }

    /// The whole method, end to end.
    pub fn ask(&self, question: &str) -> Result<AnswerTrace, QaError> {
        let mut ledger = Vec::new();
        let intent = self.identify_intent_traced(question, &mut ledger)?;
        let question = intent.question.clone();
        let mut trace = AnswerTrace {
            question: question.clone(),
            intent: Some(intent.clone()),
            matches: MatchOutcome::default(),
            bundle: None,
            communities: Vec::new(),
            community_answers: Vec::new(),
            global_answer: String::new(),
            mode: AnswerMode::Direct,
            unguided: false,
            truncated: false,
            ledger: Vec::new(),
        };

        let bundle = match self.match_entities(&intent) {
            Ok(outcome) => {
                let ids = outcome.ids();
                trace.matches = outcome;
                Some(self.retrieve_subgraph(&ids, intent.target_kind)?)
            }
            Err(QaError::NoMatches { .. }) => {
                trace.matches.unmatched = intent.relevant_elements.clone();
                None
            }
            Err(e) => return Err(e),
        };

        match bundle {
            Some(bundle) if !bundle.is_empty() => {
                let communities = form_communities(&bundle, self.graph).map_err(|source| {
                    QaError::Graph {
                        stage: QaStage::Retrieve,
                        source,
                    }
                })?;
                let linked = communities.iter().any(|c| !c.internal_edges.is_empty());
                if linked {
                    // Communities may be answered concurrently; results are
                    // consumed in community order.
                    let answers: Vec<Result<Answered, QaError>> = communities
                        .par_iter()
                        .map(|c| self.answer_community(&question, c, &bundle))
                        .collect();
                    let mut texts = Vec::new();
                    for (i, answer) in answers.into_iter().enumerate() {
                        let answer = answer?;
                        ledger.push(ledger_entry(&answer.result));
                        trace.truncated |= answer.truncated;
                        texts.push(answer.text.clone());
                        trace.community_answers.push(CommunityAnswer {
                            community: i,
                            text: answer.text,
                            digest: answer.result.digest,
                        });
                    }
                    let global = self.answer_global(&question, &texts)?;
                    ledger.push(ledger_entry(&global.result));
                    trace.global_answer = global.text;
                    trace.mode = AnswerMode::Community;
                } else {
                    let direct = self.answer_direct(&question, &bundle)?;
                    ledger.push(ledger_entry(&direct.result));
                    trace.truncated = direct.truncated;
                    trace.global_answer = direct.text;
                }
                trace.communities = communities;
                trace.bundle = Some(bundle);
            }
            other => {
                let answer = self.answer_unguided(&question)?;
                ledger.push(ledger_entry(&answer.result));
                trace.global_answer = answer.text;
                trace.unguided = true;
                trace.bundle = other;
            }
        }
        trace.ledger = ledger;
        Ok(trace)
    }
}
