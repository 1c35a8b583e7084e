//! QA datasets and answer scoring.
//!
//! Scores use greedy token matching: precision averages, over candidate
//! tokens, the best similarity to any reference token; recall does the
//! same from the reference side. Token similarity is exact equality after
//! case-folding by default, or embedding cosine when a provider is given.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

use crate::llm::{cosine, EmbedError, EmbeddingProvider};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub item_id: String,
    pub question: String,
    pub reference_answer: String,
    #[serde(default)]
    pub paper_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    /// One JSON object per line.
    Jsonl,
    /// `item_id<TAB>question<TAB>reference_answer[<TAB>paper_id,paper_id...]`.
    Tsv,
}

impl DatasetFormat {
    /// Guess from the file extension; anything but `.tsv` reads as JSON lines.
    pub fn from_path(path: &Path) -> DatasetFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("tsv") => DatasetFormat::Tsv,
            _ => DatasetFormat::Jsonl,
        }
    }
}

impl std::str::FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" | "json" => Ok(DatasetFormat::Jsonl),
            "tsv" => Ok(DatasetFormat::Tsv),
            other => Err(format!("unknown dataset format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowProblem {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RowProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed dataset: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Format(Vec<RowProblem>),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{0} has no tokens to score")]
    EmptyText(&'static str),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
}

fn check_item(item: &QaItem) -> Result<(), String> {
    let mut missing = Vec::new();
    if item.item_id.trim().is_empty() {
        missing.push("item_id");
    }
    if item.question.trim().is_empty() {
        missing.push("question");
    }
    if item.reference_answer.trim().is_empty() {
        missing.push("reference_answer");
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(format!("empty or missing {}", missing.join(", ")))
    }
}

fn parse_row(line: &str, format: DatasetFormat) -> Result<QaItem, String> {
    let item = match format {
        DatasetFormat::Jsonl => serde_json::from_str::<QaItem>(line).map_err(|e| e.to_string())?,
        DatasetFormat::Tsv => {
            let fields: Vec<&str> = line.split('\t').collect();
            if !(3..=4).contains(&fields.len()) {
                return Err(format!("expected 3 or 4 tab-separated fields, found {}", fields.len()));
            }
            QaItem {
                item_id: fields[0].trim().to_string(),
                question: fields[1].trim().to_string(),
                reference_answer: fields[2].trim().to_string(),
                paper_ids: fields
                    .get(3)
                    .map(|p| {
                        p.split(',')
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(String::from)
                            .collect()
                    })
                    .unwrap_or_default(),
            }
        }
    };
    check_item(&item)?;
    Ok(item)
}

/// Parse dataset text. Blank lines and, for TSV, lines starting with `#`
/// are skipped. Every malformed row is reported, not just the first.
pub fn parse_qa_dataset(text: &str, format: DatasetFormat) -> Result<Vec<QaItem>, EvalError> {
    let mut items = Vec::new();
    let mut problems = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() || (format == DatasetFormat::Tsv && line.starts_with('#')) {
            continue;
        }
        match parse_row(line, format) {
            Ok(item) => {
                if let Some(first) = seen.insert(item.item_id.clone(), line_no) {
                    problems.push(RowProblem {
                        line: line_no,
                        message: format!("item_id `{}` already used on line {first}", item.item_id),
                    });
                } else {
                    items.push(item);
                }
            }
            Err(message) => problems.push(RowProblem { line: line_no, message }),
        }
    }
    if problems.is_empty() {
        Ok(items)
    } else {
        Err(EvalError::Format(problems))
    }
}

pub fn load_qa_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<QaItem>, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_qa_dataset(&text, format)
}

/// Unicode words, case-folded; punctuation never forms a word.
pub fn tokenize(text: &str) -> Vec<String> {
    text.unicode_words().map(str::to_lowercase).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriplet {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ScoreTriplet {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ScoreTriplet {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Clone, Copy)]
pub enum Scorer<'a> {
    /// Similarity 1 for equal tokens, 0 otherwise.
    ExactToken,
    /// Cosine of token embeddings, clamped to `[0, 1]`; equal tokens score 1.
    EmbeddingCosine(&'a dyn EmbeddingProvider),
}

impl fmt::Debug for Scorer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Scorer<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Scorer::ExactToken => "exact-token",
            Scorer::EmbeddingCosine(_) => "embedding-cosine",
        }
    }

    /// Similarity matrix, candidate tokens by reference tokens.
    fn similarities(&self, cand: &[String], refs: &[String]) -> Result<Vec<Vec<f64>>, EvalError> {
        match self {
            Scorer::ExactToken => Ok(cand
                .iter()
                .map(|c| refs.iter().map(|r| if c == r { 1.0 } else { 0.0 }).collect())
                .collect()),
            Scorer::EmbeddingCosine(provider) => {
                let mut vocab: Vec<String> = cand.iter().chain(refs).cloned().collect();
                vocab.sort();
                vocab.dedup();
                let vectors = provider.embed(&vocab)?;
                let table: HashMap<&str, Vec<f64>> = vocab
                    .iter()
                    .map(String::as_str)
                    .zip(vectors.iter().map(|v| v.normalized()))
                    .collect();
                Ok(cand
                    .iter()
                    .map(|c| {
                        refs.iter()
                            .map(|r| {
                                if c == r {
                                    1.0
                                } else {
                                    cosine(&table[c.as_str()], &table[r.as_str()]).clamp(0.0, 1.0)
                                }
                            })
                            .collect()
                    })
                    .collect())
            }
        }
    }
}

pub fn score_pair(candidate: &str, reference: &str, scorer: &Scorer<'_>) -> Result<ScoreTriplet, EvalError> {
    let cand = tokenize(candidate);
    let refs = tokenize(reference);
    if cand.is_empty() {
        return Err(EvalError::EmptyText("candidate"));
    }
    if refs.is_empty() {
        return Err(EvalError::EmptyText("reference"));
    }
    let sim = scorer.similarities(&cand, &refs)?;
    let precision = sim
        .iter()
        .map(|row| row.iter().copied().fold(0.0, f64::max))
        .sum::<f64>()
        / cand.len() as f64;
    let recall = (0..refs.len())
        .map(|j| sim.iter().map(|row| row[j]).fold(0.0, f64::max))
        .sum::<f64>()
        / refs.len() as f64;
    Ok(ScoreTriplet::new(precision, recall))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub item_id: String,
    pub answer: Option<String>,
    pub score: Option<ScoreTriplet>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scorer: String,
    pub items: Vec<ItemResult>,
    pub scored: usize,
    pub failed: usize,
    /// Means over scored items; `None` when nothing was scored.
    pub mean: Option<ScoreTriplet>,
}

impl EvalReport {
    /// Human-readable table.
    pub fn render_table(&self) -> String {
        let mut out = String::from("item\tprecision\trecall\tf1\tnote\n");
        for item in &self.items {
            match (&item.score, &item.error) {
                (Some(s), _) => out.push_str(&format!(
                    "{}\t{:.4}\t{:.4}\t{:.4}\t\n",
                    item.item_id, s.precision, s.recall, s.f1
                )),
                (None, error) => out.push_str(&format!(
                    "{}\t-\t-\t-\t{}\n",
                    item.item_id,
                    error.as_deref().unwrap_or("unscored")
                )),
            }
        }
        match &self.mean {
            Some(m) => out.push_str(&format!(
                "mean\t{:.4}\t{:.4}\t{:.4}\tscored {} of {} ({})\n",
                m.precision,
                m.recall,
                m.f1,
                self.scored,
                self.items.len(),
                self.scorer
            )),
            None => out.push_str(&format!("mean\t-\t-\t-\tscored 0 of {}\n", self.items.len())),
        }
        out
    }

    /// One JSON record per item followed by a summary record.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            let mut value = serde_json::to_value(item).expect("item serializes");
            value["record"] = "item".into();
            out.push_str(&value.to_string());
            out.push('\n');
        }
        let summary = serde_json::json!({
            "record": "summary",
            "scorer": self.scorer,
            "items": self.items.len(),
            "scored": self.scored,
            "failed": self.failed,
            "mean": self.mean,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

/// Answer and score every item. Failures are recorded per item; the report
/// keeps dataset order regardless of how items were scheduled.
pub fn run_eval<F>(system: F, dataset: &[QaItem], scorer: &Scorer<'_>) -> Result<EvalReport, EvalError>
where
    F: Fn(&QaItem) -> Result<String, String> + Sync,
{
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let items: Vec<ItemResult> = dataset
        .par_iter()
        .map(|item| match system(item) {
            Ok(answer) => match score_pair(&answer, &item.reference_answer, scorer) {
                Ok(score) => ItemResult {
                    item_id: item.item_id.clone(),
                    answer: Some(answer),
                    score: Some(score),
                    error: None,
                },
                Err(e) => ItemResult {
                    item_id: item.item_id.clone(),
                    answer: Some(answer),
                    score: None,
                    error: Some(e.to_string()),
                },
            },
            Err(e) => ItemResult {
                item_id: item.item_id.clone(),
                answer: None,
                score: None,
                error: Some(e),
            },
        })
        .collect();
    let scores: Vec<ScoreTriplet> = items.iter().filter_map(|i| i.score).collect();
    let mean = (!scores.is_empty()).then(|| {
        let n = scores.len() as f64;
        ScoreTriplet {
            precision: scores.iter().map(|s| s.precision).sum::<f64>() / n,
            recall: scores.iter().map(|s| s.recall).sum::<f64>() / n,
            f1: scores.iter().map(|s| s.f1).sum::<f64>() / n,
        }
    });
    Ok(EvalReport {
        scorer: scorer.name().to_string(),
        scored: scores.len(),
        failed: items.len() - scores.len(),
        items,
        mean,
    })
}
