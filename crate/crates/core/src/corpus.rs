//! Structured paper corpus: parsing, validation and citation linking.
//!
//! A corpus file holds one JSON object per line. Required keys are
//! `corpus_id` and `title`; `authors`, `venue`, `date`, `abstract`,
//! `introduction`, `tables` and `citations` are optional. Unknown keys are
//! ignored.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::normalize_surface;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub institution: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableBlock {
    #[serde(rename = "index")]
    pub table_index: u32,
    #[serde(default)]
    pub caption: String,
    #[serde(default)]
    pub cells: Vec<Vec<String>>,
}

impl TableBlock {
    /// Caption followed by the grid, one row per line, cells joined by ` | `.
    pub fn render(&self) -> String {
        let mut out = format!("Table {}: {}", self.table_index, self.caption);
        for row in &self.cells {
            out.push('\n');
            out.push_str(&row.join(" | "));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationContext {
    #[serde(rename = "context")]
    pub context_text: String,
    pub cited_title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_id: Option<String>,
}

/// Publication date as given by the venue plus a best-effort (year, month).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaperDate {
    pub raw: String,
    pub year: Option<i32>,
    pub month: Option<u8>,
}

const MONTHS: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];

impl PaperDate {
    pub fn parse(raw: &str) -> PaperDate {
        let mut year = None;
        let mut month = None;
        for token in raw.split(|c: char| c.is_whitespace() || matches!(c, '-' | '/' | ',' | '.')) {
            if token.is_empty() {
                continue;
            }
            if token.len() == 4 && token.chars().all(|c| c.is_ascii_digit()) {
                year = year.or_else(|| token.parse().ok());
                continue;
            }
            let lower = token.to_lowercase();
            if let Some(pos) = MONTHS
                .iter()
                .position(|m| lower.len() >= 3 && m.starts_with(lower.as_str()))
            {
                month = month.or(Some(pos as u8 + 1));
            } else if year.is_some() && month.is_none() {
                if let Ok(n) = token.parse::<u8>() {
                    if (1..=12).contains(&n) {
                        month = Some(n);
                    }
                }
            }
        }
        PaperDate {
            raw: raw.trim().to_string(),
            year,
            month,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaperRecord {
    pub corpus_id: String,
    pub title: String,
    pub authors: Vec<AuthorEntry>,
    pub venue: Option<String>,
    pub date: Option<PaperDate>,
    pub abstract_text: String,
    pub introduction: String,
    pub tables: Vec<TableBlock>,
    pub citations: Vec<CitationContext>,
}

#[derive(Deserialize)]
struct RecordIn {
    corpus_id: Option<String>,
    title: Option<String>,
    #[serde(default)]
    authors: Vec<AuthorEntry>,
    venue: Option<String>,
    date: Option<String>,
    #[serde(rename = "abstract", default)]
    abstract_text: String,
    #[serde(default)]
    introduction: String,
    #[serde(default)]
    tables: Vec<TableBlock>,
    #[serde(default)]
    citations: Vec<CitationContext>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    corpus_id: &'a str,
    title: &'a str,
    authors: &'a [AuthorEntry],
    #[serde(skip_serializing_if = "Option::is_none")]
    venue: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    date: Option<&'a str>,
    #[serde(rename = "abstract")]
    abstract_text: &'a str,
    introduction: &'a str,
    tables: &'a [TableBlock],
    citations: &'a [CitationContext],
}

fn non_blank(s: Option<String>) -> Option<String> {
    s.map(|v| v.trim().to_string()).filter(|v| !v.is_empty())
}

/// Parse one corpus line. `line` is only used for diagnostics.
pub fn parse_paper_record(document: &str, line: usize) -> Result<PaperRecord, CorpusError> {
    let raw: RecordIn = serde_json::from_str(document).map_err(|e| CorpusError::Parse {
        line,
        message: e.to_string(),
    })?;
    let corpus_id = non_blank(raw.corpus_id).ok_or(CorpusError::MissingField {
        line,
        field: "corpus_id",
    })?;
    let title = non_blank(raw.title).ok_or(CorpusError::MissingField {
        line,
        field: "title",
    })?;

    let mut seen = HashSet::new();
    for table in &raw.tables {
        if !seen.insert(table.table_index) {
            return Err(CorpusError::Invalid {
                line,
                message: format!("duplicate table index {}", table.table_index),
            });
        }
    }
    if let Some(c) = raw.citations.iter().find(|c| c.context_text.trim().is_empty()) {
        return Err(CorpusError::Invalid {
            line,
            message: format!("empty citation context for `{}`", c.cited_title),
        });
    }
    let authors = raw
        .authors
        .into_iter()
        .filter(|a| !a.name.trim().is_empty())
        .map(|a| AuthorEntry {
            name: a.name.trim().to_string(),
            institution: non_blank(a.institution),
        })
        .collect();

    Ok(PaperRecord {
        corpus_id,
        title,
        authors,
        venue: non_blank(raw.venue),
        date: non_blank(raw.date).map(|d| PaperDate::parse(&d)),
        abstract_text: raw.abstract_text,
        introduction: raw.introduction,
        tables: raw.tables,
        citations: raw.citations,
    })
}

impl PaperRecord {
    /// One-line JSON form accepted by [`parse_paper_record`].
    pub fn to_line(&self) -> String {
        let out = RecordOut {
            corpus_id: &self.corpus_id,
            title: &self.title,
            authors: &self.authors,
            venue: self.venue.as_deref(),
            date: self.date.as_ref().map(|d| d.raw.as_str()),
            abstract_text: &self.abstract_text,
            introduction: &self.introduction,
            tables: &self.tables,
            citations: &self.citations,
        };
        serde_json::to_string(&out).expect("record serialization is infallible")
    }

    pub fn table(&self, index: u32) -> Option<&TableBlock> {
        self.tables.iter().find(|t| t.table_index == index)
    }

    /// True when neither abstract nor introduction carries any text.
    pub fn has_no_body(&self) -> bool {
        self.abstract_text.trim().is_empty() && self.introduction.trim().is_empty()
    }
}

/// Read-only collection of records in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub records: Vec<PaperRecord>,
}

impl Corpus {
    pub fn new(records: Vec<PaperRecord>) -> Self {
        Corpus { records }
    }

    /// Parse a whole corpus text. Blank lines are skipped.
    pub fn parse(text: &str) -> Result<Corpus, CorpusError> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| parse_paper_record(l, i + 1))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Corpus { records })
    }

    pub fn load(path: &Path) -> Result<Corpus, CorpusError> {
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Corpus::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_line());
            out.push('\n');
        }
        out
    }

    pub fn get(&self, corpus_id: &str) -> Option<&PaperRecord> {
        self.records.iter().find(|r| r.corpus_id == corpus_id)
    }

    /// Fill `resolved_id` on every citation whose normalized `cited_title`
    /// equals a record's normalized title. Existing links are kept.
    /// Returns the number of newly resolved citations.
    pub fn resolve_citations(&mut self) -> usize {
        let index = title_index(&self.records);
        let mut newly = 0;
        for record in &mut self.records {
            for citation in &mut record.citations {
                if citation.resolved_id.is_some() {
                    continue;
                }
                if let Some(id) = index.get(&normalize_surface(&citation.cited_title)) {
                    citation.resolved_id = Some(id.clone());
                    newly += 1;
                }
            }
        }
        newly
    }
}

/// Normalized title → first corpus_id carrying it.
fn title_index(records: &[PaperRecord]) -> HashMap<String, String> {
    let mut index = HashMap::new();
    for r in records {
        index
            .entry(normalize_surface(&r.title))
            .or_insert_with(|| r.corpus_id.clone());
    }
    index
}

pub fn resolve_citations(mut corpus: Corpus) -> Corpus {
    corpus.resolve_citations();
    corpus
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusReport {
    pub records: usize,
    /// Corpus ids seen more than once, each listed once, in order of first repeat.
    pub duplicate_ids: Vec<String>,
    pub citations: usize,
    /// Citations linked (or linkable) to a record in this corpus.
    pub resolved_citations: usize,
    pub unresolved_citations: usize,
    /// Citations whose `resolved_id` names no record.
    pub dangling_citations: usize,
    pub empty_abstracts: usize,
    pub empty_introductions: usize,
    pub tables: usize,
    /// Records with no tables and no citations.
    pub metadata_only: usize,
}

impl CorpusReport {
    pub fn is_clean(&self) -> bool {
        self.duplicate_ids.is_empty() && self.dangling_citations == 0
    }
}

/// Summarize problems in a record stream without failing.
pub fn validate_corpus<'a, I>(records: I) -> CorpusReport
where
    I: IntoIterator<Item = &'a PaperRecord>,
{
    let records: Vec<&PaperRecord> = records.into_iter().collect();
    let mut report = CorpusReport {
        records: records.len(),
        ..CorpusReport::default()
    };
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &records {
        let n = counts.entry(r.corpus_id.as_str()).or_default();
        *n += 1;
        if *n == 2 {
            report.duplicate_ids.push(r.corpus_id.clone());
        }
    }
    let ids: HashSet<&str> = counts.keys().copied().collect();
    let titles: HashSet<String> = records.iter().map(|r| normalize_surface(&r.title)).collect();

    for r in &records {
        if r.abstract_text.trim().is_empty() {
            report.empty_abstracts += 1;
        }
        if r.introduction.trim().is_empty() {
            report.empty_introductions += 1;
        }
        if r.tables.is_empty() && r.citations.is_empty() {
            report.metadata_only += 1;
        }
        report.tables += r.tables.len();
        for c in &r.citations {
            report.citations += 1;
            match &c.resolved_id {
                Some(id) if ids.contains(id.as_str()) => report.resolved_citations += 1,
                Some(_) => report.dangling_citations += 1,
                None if titles.contains(&normalize_surface(&c.cited_title)) => {
                    report.resolved_citations += 1
                }
                None => report.unresolved_citations += 1,
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRL: &str = r#"{"corpus_id":"2012.coling-demos.1","title":"Revisiting Arabic Semantic Role Labeling using SVM Kernel Methods","date":"2012 December","authors":[{"name":"Laurel Hart","institution":"BCL Technologies"}],"venue":"Proceedings of COLING 2012: Demonstration Papers"}"#;

    #[test]
    fn parses_metadata_record() {
        let r = parse_paper_record(SRL, 1).unwrap();
        assert_eq!(r.title, "Revisiting Arabic Semantic Role Labeling using SVM Kernel Methods");
        let date = r.date.as_ref().unwrap();
        assert_eq!(date.raw, "2012 December");
        assert_eq!((date.year, date.month), (Some(2012), Some(12)));
        assert_eq!(r.authors[0].name, "Laurel Hart");
        assert_eq!(r.authors[0].institution.as_deref(), Some("BCL Technologies"));
        assert!(r.tables.is_empty());
        assert!(r.citations.is_empty());
        assert_eq!(r.abstract_text, "");
    }

    #[test]
    fn missing_title_is_rejected() {
        let err = parse_paper_record(r#"{"corpus_id":"x"}"#, 7).unwrap_err();
        assert!(matches!(err, CorpusError::MissingField { line: 7, field: "title" }));
        let err = parse_paper_record(r#"{"title":"T"}"#, 1).unwrap_err();
        assert!(matches!(err, CorpusError::MissingField { field: "corpus_id", .. }));
        let err = parse_paper_record("{not json", 3).unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 3, .. }));
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let r = parse_paper_record(r#"{"corpus_id":"a","title":"T","pdf_url":"x"}"#, 1).unwrap();
        assert_eq!(r.corpus_id, "a");
    }

    #[test]
    fn duplicate_table_index_rejected() {
        let doc = r#"{"corpus_id":"a","title":"T","tables":[{"index":0,"caption":"a","cells":[]},{"index":0,"caption":"b","cells":[]}]}"#;
        assert!(matches!(
            parse_paper_record(doc, 1),
            Err(CorpusError::Invalid { .. })
        ));
    }

    #[test]
    fn date_variants() {
        let d = PaperDate::parse("December 2012");
        assert_eq!((d.year, d.month), (Some(2012), Some(12)));
        let d = PaperDate::parse("2019-07");
        assert_eq!((d.year, d.month), (Some(2019), Some(7)));
        let d = PaperDate::parse("1998");
        assert_eq!((d.year, d.month), (Some(1998), None));
    }

    fn rec(id: &str, title: &str, cites: &[&str]) -> PaperRecord {
        PaperRecord {
            corpus_id: id.into(),
            title: title.into(),
            authors: vec![],
            venue: None,
            date: None,
            abstract_text: String::new(),
            introduction: String::new(),
            tables: vec![],
            citations: cites
                .iter()
                .map(|t| CitationContext {
                    context_text: format!("see {t}"),
                    cited_title: t.to_string(),
                    resolved_id: None,
                })
                .collect(),
        }
    }

    #[test]
    fn report_flags_duplicates() {
        let a = rec("2012.coling-demos.1", "A", &[]);
        let b = rec("2012.coling-demos.1", "B", &[]);
        let report = validate_corpus([&a, &b]);
        assert_eq!(report.duplicate_ids, vec!["2012.coling-demos.1".to_string()]);
    }

    #[test]
    fn empty_stream_report_is_zero() {
        let report = validate_corpus(std::iter::empty());
        assert_eq!(report, CorpusReport::default());
    }

    #[test]
    fn resolution_normalizes_titles() {
        let mut corpus = Corpus::new(vec![
            rec(
                "a",
                "Revisiting",
                &[
                    "CUNIT: A Semantic Role Labeling System for Modern Standard Arabic",
                    "automatic labeling of SEMANTIC roles.  ",
                    "Some External Paper",
                ],
            ),
            rec("b", "CUNIT: A Semantic Role Labeling System for Modern Standard Arabic", &[]),
            rec("c", "Automatic Labeling of Semantic Roles", &[]),
        ]);
        assert_eq!(validate_corpus(&corpus.records).resolved_citations, 2);
        assert_eq!(corpus.resolve_citations(), 2);
        let cites = &corpus.records[0].citations;
        assert_eq!(cites[0].resolved_id.as_deref(), Some("b"));
        assert_eq!(cites[1].resolved_id.as_deref(), Some("c"));
        assert_eq!(cites[2].resolved_id, None);
        // Idempotent.
        let before = corpus.clone();
        assert_eq!(corpus.resolve_citations(), 0);
        assert_eq!(before, corpus);
        let report = validate_corpus(&corpus.records);
        assert_eq!(report.resolved_citations, 2);
        assert_eq!(report.unresolved_citations, 1);
    }

    #[test]
    fn existing_links_are_kept() {
        let mut corpus = Corpus::new(vec![rec("a", "A", &["B"]), rec("b", "B", &[])]);
        corpus.records[0].citations[0].resolved_id = Some("a".into());
        corpus.resolve_citations();
        assert_eq!(corpus.records[0].citations[0].resolved_id.as_deref(), Some("a"));
    }

    #[test]
    fn dangling_link_is_reported() {
        let mut corpus = Corpus::new(vec![rec("a", "A", &["B"])]);
        corpus.records[0].citations[0].resolved_id = Some("zzz".into());
        let report = validate_corpus(&corpus.records);
        assert_eq!(report.dangling_citations, 1);
        assert!(!report.is_clean());
    }
}
