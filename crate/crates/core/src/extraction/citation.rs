//! Citation-context classification into inter-paper relations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ExtractionError;
use crate::corpus::CitationContext;
use crate::schema::RelationKind;

const DEFAULT_LEXICON: &str = include_str!("../../assets/lexicons/citation_cues.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CitationKind {
    DirectUse,
    TaskRelated,
    Unrelated,
}

impl CitationKind {
    /// The inter-paper relation this label produces, if any.
    pub fn relation(self) -> Option<RelationKind> {
        match self {
            CitationKind::DirectUse => Some(RelationKind::DirectUse),
            CitationKind::TaskRelated => Some(RelationKind::TaskRelated),
            CitationKind::Unrelated => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CitationLabel {
    pub kind: CitationKind,
    /// In `[0, 1]`.
    pub confidence: f64,
}

/// Pluggable classifier; the rule-based one is the default.
pub trait CitationClassifier: Send + Sync {
    fn id(&self) -> &str;
    fn classify(&self, context: &CitationContext) -> Result<CitationLabel, ExtractionError>;
}

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

fn count_hits(haystack: &[String], cues: &[Vec<String>]) -> usize {
    cues.iter()
        .filter(|cue| {
            !cue.is_empty() && haystack.windows(cue.len()).any(|w| w == cue.as_slice())
        })
        .count()
}

/// Cue-lexicon classifier.
///
/// A context with any direct-use cue is `DirectUse`; otherwise any
/// task cue makes it `TaskRelated`; otherwise it is `Unrelated`.
/// Confidence is the winning class's share of all matched cues.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleCitationClassifier {
    direct: Vec<Vec<String>>,
    task: Vec<Vec<String>>,
}

impl Default for RuleCitationClassifier {
    fn default() -> Self {
        Self::from_lexicon(DEFAULT_LEXICON).expect("shipped lexicon parses")
    }
}

impl RuleCitationClassifier {
    /// Parse a lexicon with `[direct_use]` and `[task_related]` sections.
    pub fn from_lexicon(text: &str) -> Result<Self, String> {
        let mut sections: BTreeMap<&str, Vec<Vec<String>>> = BTreeMap::new();
        let mut current: Option<&str> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                match name {
                    "direct_use" | "task_related" => current = Some(name),
                    other => return Err(format!("line {}: unknown section [{other}]", n + 1)),
                }
                continue;
            }
            let section = current.ok_or_else(|| format!("line {}: cue outside a section", n + 1))?;
            sections.entry(section).or_default().push(words(line));
        }
        Ok(RuleCitationClassifier {
            direct: sections.remove("direct_use").unwrap_or_default(),
            task: sections.remove("task_related").unwrap_or_default(),
        })
    }

    pub fn label_text(&self, text: &str) -> CitationLabel {
        let w = words(text);
        let direct = count_hits(&w, &self.direct);
        let task = count_hits(&w, &self.task);
        let total = (direct + task) as f64;
        if direct > 0 {
            CitationLabel {
                kind: CitationKind::DirectUse,
                confidence: direct as f64 / total,
            }
        } else if task > 0 {
            CitationLabel {
                kind: CitationKind::TaskRelated,
                confidence: 1.0,
            }
        } else {
            CitationLabel {
                kind: CitationKind::Unrelated,
                confidence: 1.0,
            }
        }
    }
}

impl CitationClassifier for RuleCitationClassifier {
    fn id(&self) -> &str {
        "rules"
    }

    fn classify(&self, context: &CitationContext) -> Result<CitationLabel, ExtractionError> {
        Ok(self.label_text(&context.context_text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(text: &str) -> CitationKind {
        RuleCitationClassifier::default().label_text(text).kind
    }

    #[test]
    fn lexicon_examples() {
        assert_eq!(
            label("we adopt the kernel methods of [X] for argument classification"),
            CitationKind::DirectUse
        );
        assert_eq!(
            label("prior work on automatic labeling of semantic roles [Y] established the task"),
            CitationKind::TaskRelated
        );
        assert_eq!(label("see [Z]"), CitationKind::Unrelated);
    }

    #[test]
    fn whole_word_matching() {
        // "user" and "abused" must not fire the "use"/"used" cues.
        assert_eq!(label("the user interface in [Z]"), CitationKind::Unrelated);
        assert_eq!(label("abused terminology [Z]"), CitationKind::Unrelated);
    }

    #[test]
    fn confidence_in_unit_interval() {
        let c = RuleCitationClassifier::default();
        let l = c.label_text("we use the task setup of prior work on parsing");
        assert_eq!(l.kind, CitationKind::DirectUse);
        assert!(l.confidence > 0.0 && l.confidence < 1.0);
    }

    #[test]
    fn custom_lexicon() {
        let c = RuleCitationClassifier::from_lexicon("[direct_use]\nfoo bar\n[task_related]\nbaz\n").unwrap();
        assert_eq!(c.label_text("x foo bar y").kind, CitationKind::DirectUse);
        assert_eq!(c.label_text("foo x bar").kind, CitationKind::Unrelated);
        assert_eq!(c.label_text("BAZ").kind, CitationKind::TaskRelated);
        assert!(RuleCitationClassifier::from_lexicon("stray").is_err());
        assert!(RuleCitationClassifier::from_lexicon("[other]\n").is_err());
    }
}
