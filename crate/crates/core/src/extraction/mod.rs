//! Turns paper records into candidate entities and triples.
//!
//! Metadata entities (title, authors, institutions, venue, date) are read
//! straight from the record. Semantic elements come from prompt pipelines:
//! one structured completion over the abstract and introduction, a
//! screening/table pass for results, and an innovation summary. Resolved
//! citations are classified into inter-paper relations.
//!
//! Every completion that fails to parse is re-asked at most
//! [`Extractor::max_reasks`] times with the parse error appended.

mod citation;
mod parse;

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, PaperRecord};
use crate::llm::{CompletionRequest, Gateway, GatewayError};
use crate::schema::{EntityKind, RelationKind};
use crate::text::squash_whitespace;

pub use citation::{CitationClassifier, CitationKind, CitationLabel, RuleCitationClassifier};
pub use parse::{
    parse_innovation, parse_reextraction, parse_result_triples, parse_screening,
    parse_table_choice, parse_text_elements, Screening, MAX_KEYWORDS,
};

/// One row of a main-results table attributed to the paper's model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResultTriple {
    pub dataset: String,
    pub metric: String,
    pub result: String,
}

impl ResultTriple {
    /// Surface text of the Result entity.
    pub fn surface(&self) -> String {
        format!("({}, {}, {})", self.dataset, self.metric, self.result)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedElements {
    pub field: Option<String>,
    pub keywords: Vec<String>,
    pub problem: Option<String>,
    pub method: Option<String>,
    pub model: Option<String>,
    pub task: Option<String>,
    pub innovation: Option<String>,
    pub results: Vec<ResultTriple>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Metadata,
    Elements,
    PaperScreening,
    TableScreening,
    TableTriples,
    Innovation,
    Citations,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Metadata => "metadata",
            Stage::Elements => "elements",
            Stage::PaperScreening => "paper_screening",
            Stage::TableScreening => "table_screening",
            Stage::TableTriples => "table_triples",
            Stage::Innovation => "innovation",
            Stage::Citations => "citations",
        }
    }

    /// Stage whose prompt produces entities of `kind`.
    pub fn producing(kind: EntityKind) -> Stage {
        match kind {
            EntityKind::Field
            | EntityKind::Keywords
            | EntityKind::Problem
            | EntityKind::Method
            | EntityKind::Model
            | EntityKind::Task => Stage::Elements,
            EntityKind::Innovation => Stage::Innovation,
            EntityKind::Dataset | EntityKind::Metric | EntityKind::Result => Stage::TableTriples,
            _ => Stage::Metadata,
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractionError {
    #[error("{stage}: completion failed: {source}")]
    Completion {
        stage: Stage,
        #[source]
        source: GatewayError,
    },
    #[error("{stage}: unparseable output after {attempts} attempt(s): {message}")]
    Unparseable {
        stage: Stage,
        attempts: u32,
        message: String,
        output: String,
    },
    #[error("record has no tables")]
    NoTables,
    #[error("table {index} does not exist (available: {available:?})")]
    IndexOutOfRange { index: u32, available: Vec<u32> },
    #[error("innovation summary needs a problem or a method")]
    MissingElements,
    #[error("citation classifier unavailable: {0}")]
    ClassifierUnavailable(String),
}

impl ExtractionError {
    pub fn stage(&self) -> Stage {
        match self {
            ExtractionError::Completion { stage, .. } | ExtractionError::Unparseable { stage, .. } => {
                *stage
            }
            ExtractionError::NoTables | ExtractionError::IndexOutOfRange { .. } => {
                Stage::TableScreening
            }
            ExtractionError::MissingElements => Stage::Innovation,
            ExtractionError::ClassifierUnavailable(_) => Stage::Citations,
        }
    }
}

/// Failure of one record, tagged with the stage that failed.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("paper {corpus_id}, stage {stage}: {error}")]
pub struct PaperFailure {
    pub corpus_id: String,
    pub stage: Stage,
    #[source]
    pub error: ExtractionError,
}

/// Endpoint of a candidate triple. Title endpoints carry the corpus id of
/// the paper they stand for so that citation links land on the right node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityRef {
    pub kind: EntityKind,
    pub surface: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paper: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityCandidate {
    pub kind: EntityKind,
    pub surface: String,
    pub corpus_id: String,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TripleCandidate {
    pub subject: EntityRef,
    pub relation: RelationKind,
    pub object: EntityRef,
    pub corpus_id: String,
    pub stage: Stage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub corpus_id: String,
    pub stage: Stage,
    pub status: StageStatus,
    pub calls: usize,
    /// Digest of the first prompt sent by this stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_digest: Option<String>,
    /// The first prompt itself, kept so erroneous elements can be re-extracted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// One line of a candidate dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum DumpRecord {
    Entity(EntityCandidate),
    Triple(TripleCandidate),
    Stage(StageRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperExtraction {
    pub corpus_id: String,
    pub elements: ExtractedElements,
    pub entities: Vec<EntityCandidate>,
    /// Triples within the paper.
    pub triples: Vec<TripleCandidate>,
    /// Title-to-title citation candidates.
    pub inter_paper: Vec<TripleCandidate>,
    pub stages: Vec<StageRecord>,
}

impl PaperExtraction {
    /// Dump records: stages, then entities, then triples.
    pub fn records(&self) -> Vec<DumpRecord> {
        self.stages
            .iter()
            .cloned()
            .map(DumpRecord::Stage)
            .chain(self.entities.iter().cloned().map(DumpRecord::Entity))
            .chain(
                self.triples
                    .iter()
                    .chain(&self.inter_paper)
                    .cloned()
                    .map(DumpRecord::Triple),
            )
            .collect()
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn total_calls(&self) -> usize {
        self.stages.iter().map(|s| s.calls).sum()
    }
}

pub fn write_dump<'a, W: Write>(
    out: &mut W,
    extractions: impl IntoIterator<Item = &'a PaperExtraction>,
) -> io::Result<()> {
    for extraction in extractions {
        write_records(out, &extraction.records())?;
    }
    Ok(())
}

/// Write records one JSON object per line, in the format `read_dump` reads.
pub fn write_records<W: Write>(out: &mut W, records: &[DumpRecord]) -> io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut *out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Read a candidate dump; errors name the offending line.
pub fn read_dump<R: BufRead>(input: R) -> Result<Vec<DumpRecord>, String> {
    let mut records = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| format!("line {}: {e}", n + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", n + 1))?);
    }
    Ok(records)
}

#[derive(Debug, Default)]
pub(crate) struct Trace {
    pub(crate) calls: usize,
    pub(crate) digest: Option<String>,
    pub(crate) prompt: Option<String>,
}

/// Complete and parse; on a parse failure append the error as feedback and
/// ask again, at most `max_reasks` times.
pub(crate) fn ask_parsed<T>(
    gateway: &Gateway,
    max_reasks: u32,
    stage: Stage,
    mut request: CompletionRequest,
    parse: impl Fn(&str) -> Result<T, String>,
    trace: &mut Trace,
) -> Result<T, ExtractionError> {
    for attempt in 0..=max_reasks {
        let result = gateway
            .complete(&request)
            .map_err(|source| ExtractionError::Completion { stage, source })?;
        trace.calls += 1;
        if trace.digest.is_none() {
            trace.digest = Some(result.digest.clone());
            trace.prompt = Some(result.prompt.clone());
        }
        match parse(&result.text) {
            Ok(value) => return Ok(value),
            Err(message) if attempt == max_reasks => {
                return Err(ExtractionError::Unparseable {
                    stage,
                    attempts: attempt + 1,
                    message,
                    output: result.text,
                })
            }
            Err(message) => request.feedback.push(format!(
                "Your previous answer could not be used: {message}.\nPrevious answer:\n{}\nAnswer again in the required format.",
                result.text
            )),
        }
    }
    unreachable!("loop returns on its last iteration")
}

fn or_placeholder(value: Option<&str>, placeholder: &str) -> String {
    value.map(str::to_string).unwrap_or_else(|| placeholder.to_string())
}

pub struct Extractor<'a> {
    pub gateway: &'a Gateway,
    pub classifier: &'a dyn CitationClassifier,
    pub max_reasks: u32,
}

impl<'a> Extractor<'a> {
    pub fn new(gateway: &'a Gateway, classifier: &'a dyn CitationClassifier) -> Self {
        Extractor {
            gateway,
            classifier,
            max_reasks: 2,
        }
    }

    fn ask<T>(
        &self,
        stage: Stage,
        request: CompletionRequest,
        parse: impl Fn(&str) -> Result<T, String>,
        trace: &mut Trace,
    ) -> Result<T, ExtractionError> {
        ask_parsed(self.gateway, self.max_reasks, stage, request, parse, trace)
    }

    fn elements_traced(
        &self,
        record: &PaperRecord,
        trace: &mut Trace,
    ) -> Result<ExtractedElements, ExtractionError> {
        if record.has_no_body() {
            return Ok(ExtractedElements::default());
        }
        let request = self
            .gateway
            .request("text_elements")
            .slot("title", &record.title)
            .slot("abstract", &record.abstract_text)
            .slot("introduction", &record.introduction);
        self.ask(Stage::Elements, request, parse_text_elements, trace)
    }

    /// Field, keywords, problem, method, model and task from one completion
    /// over the abstract and introduction. A record with neither yields
    /// empty elements without any call.
    pub fn extract_text_elements(&self, record: &PaperRecord) -> Result<ExtractedElements, ExtractionError> {
        self.elements_traced(record, &mut Trace::default())
    }

    fn screening_traced(&self, record: &PaperRecord, trace: &mut Trace) -> Result<Screening, ExtractionError> {
        let captions = if record.tables.is_empty() {
            "(none)".to_string()
        } else {
            record
                .tables
                .iter()
                .map(|t| format!("Table {}: {}", t.table_index, t.caption))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let request = self
            .gateway
            .request("paper_screening")
            .slot("title", &record.title)
            .slot("abstract", &record.abstract_text)
            .slot("introduction", &record.introduction)
            .slot("table_captions", captions);
        self.ask(Stage::PaperScreening, request, parse_screening, trace)
    }

    /// The paper's own model, or `NotApplicable` for papers that only
    /// evaluate other work.
    pub fn screen_paper_for_results(&self, record: &PaperRecord) -> Result<Screening, ExtractionError> {
        self.screening_traced(record, &mut Trace::default())
    }

    fn tables_traced(&self, record: &PaperRecord, model: &str, trace: &mut Trace) -> Result<u32, ExtractionError> {
        if record.tables.is_empty() {
            return Err(ExtractionError::NoTables);
        }
        let tables = record
            .tables
            .iter()
            .map(|t| t.render())
            .collect::<Vec<_>>()
            .join("\n\n");
        let request = self
            .gateway
            .request("table_screening")
            .slot("model", model)
            .slot("tables", tables);
        let index = self.ask(Stage::TableScreening, request, parse_table_choice, trace)?;
        if record.table(index).is_none() {
            return Err(ExtractionError::IndexOutOfRange {
                index,
                available: record.tables.iter().map(|t| t.table_index).collect(),
            });
        }
        Ok(index)
    }

    /// Index of the main-results table.
    pub fn screen_tables(&self, record: &PaperRecord, model: &str) -> Result<u32, ExtractionError> {
        self.tables_traced(record, model, &mut Trace::default())
    }

    fn triples_traced(
        &self,
        record: &PaperRecord,
        model: &str,
        table_index: u32,
        trace: &mut Trace,
    ) -> Result<Vec<ResultTriple>, ExtractionError> {
        let table = record.table(table_index).ok_or_else(|| ExtractionError::IndexOutOfRange {
            index: table_index,
            available: record.tables.iter().map(|t| t.table_index).collect(),
        })?;
        let request = self
            .gateway
            .request("table_triples")
            .slot("model", model)
            .slot("table", table.render());
        self.ask(Stage::TableTriples, request, parse_result_triples, trace)
    }

    /// Deduplicated `(dataset, metric, result)` rows for the paper's model.
    pub fn extract_table_triples(
        &self,
        record: &PaperRecord,
        model: &str,
        table_index: u32,
    ) -> Result<Vec<ResultTriple>, ExtractionError> {
        self.triples_traced(record, model, table_index, &mut Trace::default())
    }

    fn innovation_traced(
        &self,
        record: &PaperRecord,
        elements: &ExtractedElements,
        trace: &mut Trace,
    ) -> Result<String, ExtractionError> {
        if elements.problem.is_none() && elements.method.is_none() {
            return Err(ExtractionError::MissingElements);
        }
        let results = if elements.results.is_empty() {
            "not reported".to_string()
        } else {
            elements
                .results
                .iter()
                .map(ResultTriple::surface)
                .collect::<Vec<_>>()
                .join("; ")
        };
        let request = self
            .gateway
            .request("innovation")
            .slot("problem", or_placeholder(elements.problem.as_deref(), "not stated"))
            .slot("task", or_placeholder(elements.task.as_deref(), "not stated"))
            .slot("method", or_placeholder(elements.method.as_deref(), "not stated"))
            .slot("results", results)
            .slot("abstract", &record.abstract_text)
            .slot("introduction", &record.introduction);
        self.ask(Stage::Innovation, request, parse_innovation, trace)
    }

    /// One-sentence innovation summary.
    pub fn summarize_innovation(
        &self,
        record: &PaperRecord,
        elements: &ExtractedElements,
    ) -> Result<String, ExtractionError> {
        self.innovation_traced(record, elements, &mut Trace::default())
    }

    /// Entities, intra-paper triples and inter-paper candidates for one
    /// record, with a stage record per pipeline step.
    pub fn extract_all(&self, record: &PaperRecord) -> Result<PaperExtraction, PaperFailure> {
        let fail = |error: ExtractionError| PaperFailure {
            corpus_id: record.corpus_id.clone(),
            stage: error.stage(),
            error,
        };
        let mut out = Builder::new(record);

        out.metadata();
        out.stage(Stage::Metadata, StageStatus::Ok, Trace::default(), None);

        let mut trace = Trace::default();
        let mut elements = self.elements_traced(record, &mut trace).map_err(fail)?;
        let status = if record.has_no_body() { StageStatus::Skipped } else { StageStatus::Ok };
        out.stage(Stage::Elements, status, trace, None);

        self.results_pipeline(record, &mut elements, &mut out).map_err(fail)?;

        if elements.problem.is_some() || elements.method.is_some() {
            let mut trace = Trace::default();
            let sentence = self.innovation_traced(record, &elements, &mut trace).map_err(fail)?;
            elements.innovation = Some(sentence);
            out.stage(Stage::Innovation, StageStatus::Ok, trace, None);
        } else {
            out.stage(
                Stage::Innovation,
                StageStatus::Skipped,
                Trace::default(),
                Some("no problem or method"),
            );
        }

        out.elements(&elements);
        out.citations(self.classifier).map_err(fail)?;
        Ok(out.finish(elements))
    }

    fn results_pipeline(
        &self,
        record: &PaperRecord,
        elements: &mut ExtractedElements,
        out: &mut Builder<'_>,
    ) -> Result<(), ExtractionError> {
        if record.tables.is_empty() || record.has_no_body() {
            for stage in [Stage::PaperScreening, Stage::TableScreening, Stage::TableTriples] {
                out.stage(stage, StageStatus::Skipped, Trace::default(), Some("no tables or no body"));
            }
            return Ok(());
        }
        let mut trace = Trace::default();
        let screening = self.screening_traced(record, &mut trace)?;
        out.stage(Stage::PaperScreening, StageStatus::Ok, trace, None);
        let Screening::Model(model) = screening else {
            for stage in [Stage::TableScreening, Stage::TableTriples] {
                out.stage(stage, StageStatus::Skipped, Trace::default(), Some("no proposed model"));
            }
            return Ok(());
        };
        let mut trace = Trace::default();
        let index = self.tables_traced(record, &model, &mut trace)?;
        out.stage(Stage::TableScreening, StageStatus::Ok, trace, Some(&format!("Table {index}")));
        let mut trace = Trace::default();
        elements.results = self.triples_traced(record, &model, index, &mut trace)?;
        out.stage(Stage::TableTriples, StageStatus::Ok, trace, None);
        Ok(())
    }
}

/// Accumulates candidates for one paper, deduplicating as it goes.
struct Builder<'r> {
    record: &'r PaperRecord,
    entities: Vec<EntityCandidate>,
    triples: Vec<TripleCandidate>,
    inter_paper: Vec<TripleCandidate>,
    stages: Vec<StageRecord>,
}

impl<'r> Builder<'r> {
    fn new(record: &'r PaperRecord) -> Self {
        Builder {
            record,
            entities: Vec::new(),
            triples: Vec::new(),
            inter_paper: Vec::new(),
            stages: Vec::new(),
        }
    }

    fn stage(&mut self, stage: Stage, status: StageStatus, trace: Trace, note: Option<&str>) {
        self.stages.push(StageRecord {
            corpus_id: self.record.corpus_id.clone(),
            stage,
            status,
            calls: trace.calls,
            prompt_digest: trace.digest,
            prompt: trace.prompt,
            note: note.map(str::to_string),
        });
    }

    fn title_ref(&self) -> EntityRef {
        EntityRef {
            kind: EntityKind::Title,
            surface: squash_whitespace(&self.record.title),
            paper: Some(self.record.corpus_id.clone()),
        }
    }

    /// Register an entity; returns its reference, or `None` for blank text.
    fn entity(&mut self, kind: EntityKind, surface: &str, stage: Stage) -> Option<EntityRef> {
        let surface = squash_whitespace(surface);
        if surface.is_empty() {
            return None;
        }
        let candidate = EntityCandidate {
            kind,
            surface: surface.clone(),
            corpus_id: self.record.corpus_id.clone(),
            stage,
        };
        if !self.entities.contains(&candidate) {
            self.entities.push(candidate);
        }
        Some(EntityRef {
            kind,
            surface,
            paper: (kind == EntityKind::Title).then(|| self.record.corpus_id.clone()),
        })
    }

    fn triple(&mut self, subject: EntityRef, relation: RelationKind, object: EntityRef, stage: Stage) {
        let candidate = TripleCandidate {
            subject,
            relation,
            object,
            corpus_id: self.record.corpus_id.clone(),
            stage,
        };
        let list = if relation.is_inter_paper() { &mut self.inter_paper } else { &mut self.triples };
        if !list.contains(&candidate) {
            list.push(candidate);
        }
    }

    fn metadata(&mut self) {
        let record = self.record;
        let stage = Stage::Metadata;
        let Some(title) = self.entity(EntityKind::Title, &record.title, stage) else {
            return;
        };
        let title = EntityRef { paper: Some(record.corpus_id.clone()), ..title };
        for author in &record.authors {
            let Some(a) = self.entity(EntityKind::Author, &author.name, stage) else {
                continue;
            };
            self.triple(a.clone(), RelationKind::Writes, title.clone(), stage);
            if let Some(inst) = author
                .institution
                .as_deref()
                .and_then(|i| self.entity(EntityKind::Institution, i, stage))
            {
                self.triple(a, RelationKind::WorksFor, inst, stage);
            }
        }
        if let Some(venue) = record
            .venue
            .as_deref()
            .and_then(|v| self.entity(EntityKind::Conference, v, stage))
        {
            self.triple(title.clone(), RelationKind::Publishes, venue, stage);
        }
        if let Some(date) = record
            .date
            .as_ref()
            .and_then(|d| self.entity(EntityKind::Date, &d.raw, stage))
        {
            self.triple(title, RelationKind::IsWrittenIn, date, stage);
        }
    }

    /// Element entities plus every intra-paper signature whose two ends
    /// are present in this paper: Title-anchored edges and element-to-
    /// element edges alike.
    fn elements(&mut self, elements: &ExtractedElements) {
        let mut present: BTreeMap<EntityKind, Vec<EntityRef>> = BTreeMap::new();
        let mut add = |this: &mut Self, kind: EntityKind, surface: &str| {
            if let Some(r) = this.entity(kind, surface, Stage::producing(kind)) {
                let list = present.entry(kind).or_default();
                if !list.contains(&r) {
                    list.push(r);
                }
            }
        };
        let single = [
            (EntityKind::Field, &elements.field),
            (EntityKind::Problem, &elements.problem),
            (EntityKind::Method, &elements.method),
            (EntityKind::Model, &elements.model),
            (EntityKind::Task, &elements.task),
            (EntityKind::Innovation, &elements.innovation),
        ];
        for (kind, value) in single {
            if let Some(v) = value {
                add(self, kind, v);
            }
        }
        for k in &elements.keywords {
            add(self, EntityKind::Keywords, k);
        }
        for r in &elements.results {
            add(self, EntityKind::Dataset, &r.dataset);
            add(self, EntityKind::Metric, &r.metric);
            add(self, EntityKind::Result, &r.surface());
        }
        if present.is_empty() {
            return;
        }
        present.insert(EntityKind::Title, vec![self.title_ref()]);
        for relation in RelationKind::ALL {
            if relation.is_inter_paper() {
                continue;
            }
            for &(s, o) in relation.signatures() {
                if o == EntityKind::Title || o.is_metadata() || (s != EntityKind::Title && s.is_metadata()) {
                    continue;
                }
                let (Some(subjects), Some(objects)) = (present.get(&s), present.get(&o)) else {
                    continue;
                };
                let stage = Stage::producing(o);
                for subject in subjects.clone() {
                    for object in objects.clone() {
                        self.triple(subject.clone(), relation, object, stage);
                    }
                }
            }
        }
    }

    fn citations(&mut self, classifier: &dyn CitationClassifier) -> Result<(), ExtractionError> {
        let record = self.record;
        let mut classified = 0;
        for citation in &record.citations {
            let Some(cited) = &citation.resolved_id else {
                continue;
            };
            if *cited == record.corpus_id {
                continue;
            }
            classified += 1;
            let label = classifier.classify(citation)?;
            if let Some(relation) = label.kind.relation() {
                let object = EntityRef {
                    kind: EntityKind::Title,
                    surface: squash_whitespace(&citation.cited_title),
                    paper: Some(cited.clone()),
                };
                self.triple(self.title_ref(), relation, object, Stage::Citations);
            }
        }
        let note = format!("{classified} resolved citation(s) classified by {}", classifier.id());
        self.stage(Stage::Citations, StageStatus::Ok, Trace::default(), Some(&note));
        Ok(())
    }

    fn finish(self, elements: ExtractedElements) -> PaperExtraction {
        PaperExtraction {
            corpus_id: self.record.corpus_id.clone(),
            elements,
            entities: self.entities,
            triples: self.triples,
            inter_paper: self.inter_paper,
            stages: self.stages,
        }
    }
}

/// Inter-paper candidates of one record from its resolved citations. No
/// completion calls are made.
pub fn citation_candidates(
    record: &PaperRecord,
    classifier: &dyn CitationClassifier,
) -> Result<Vec<TripleCandidate>, ExtractionError> {
    let mut out = Builder::new(record);
    out.citations(classifier)?;
    Ok(out.inter_paper)
}

/// Extract every record in parallel; results come back in corpus order.
pub fn extract_corpus(
    extractor: &Extractor<'_>,
    corpus: &Corpus,
) -> Vec<Result<PaperExtraction, PaperFailure>> {
    corpus
        .records
        .par_iter()
        .map(|record| extractor.extract_all(record))
        .collect()
}
