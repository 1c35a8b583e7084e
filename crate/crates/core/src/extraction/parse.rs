//! Parsers for completion text. Each returns a short human-readable
//! message on failure; the message is fed back to the model on re-ask.

use std::sync::LazyLock;

use regex::Regex;
use serde_json::{Map, Value};

use super::{ExtractedElements, ResultTriple};

pub const MAX_KEYWORDS: usize = 5;

const ELEMENT_KEYS: [&str; 6] = ["Field", "Keywords", "Problem", "Method", "Model", "Task"];

/// Find the first balanced `{...}` block that parses as a JSON object.
fn first_json_object(text: &str) -> Option<Map<String, Value>> {
    let bytes = text.as_bytes();
    for (start, _) in text.match_indices('{') {
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        for (offset, &b) in bytes[start..].iter().enumerate() {
            if in_string {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_string = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_string = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        let candidate = &text[start..=start + offset];
                        if let Ok(Value::Object(map)) = serde_json::from_str(candidate) {
                            return Some(map);
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    None
}

fn clean(s: &str) -> Option<String> {
    let t = s.trim();
    (!t.is_empty()).then(|| t.to_string())
}

fn optional_string(map: &Map<String, Value>, key: &str) -> Result<Option<String>, String> {
    match map.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(clean(s)),
        Some(other) => Err(format!("value of \"{key}\" must be a string or null, found {other}")),
    }
}

/// Parse the text-elements answer: one JSON object whose keys are a subset
/// of Field, Keywords, Problem, Method, Model, Task. Prose around the object
/// is ignored; any other key is an error.
pub fn parse_text_elements(text: &str) -> Result<ExtractedElements, String> {
    let map = first_json_object(text).ok_or_else(|| "no JSON object found in the answer".to_string())?;
    if let Some(bad) = map.keys().find(|k| !ELEMENT_KEYS.contains(&k.as_str())) {
        return Err(format!(
            "unexpected key \"{bad}\"; use exactly the keys {}",
            ELEMENT_KEYS.map(|k| format!("\"{k}\"")).join(", ")
        ));
    }
    let keywords = match map.get("Keywords") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => {
            let mut out: Vec<String> = Vec::new();
            for item in items {
                let Value::String(s) = item else {
                    return Err(format!("\"Keywords\" entries must be strings, found {item}"));
                };
                if let Some(k) = clean(s) {
                    if !out.contains(&k) {
                        out.push(k);
                    }
                }
            }
            out.truncate(MAX_KEYWORDS);
            out
        }
        Some(other) => return Err(format!("\"Keywords\" must be a list of strings, found {other}")),
    };
    Ok(ExtractedElements {
        field: optional_string(&map, "Field")?,
        keywords,
        problem: optional_string(&map, "Problem")?,
        method: optional_string(&map, "Method")?,
        model: optional_string(&map, "Model")?,
        task: optional_string(&map, "Task")?,
        innovation: None,
        results: Vec::new(),
    })
}

/// Outcome of paper screening.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Screening {
    Model(String),
    NotApplicable,
}

fn strip_terminal_punct(s: &str) -> &str {
    s.trim()
        .trim_end_matches(|c: char| c.is_ascii_punctuation() && c != ')')
        .trim()
}

pub fn parse_screening(text: &str) -> Result<Screening, String> {
    let trimmed = text.trim();
    let bare = strip_terminal_punct(trimmed.trim_matches(|c| c == '"' || c == '\''));
    if bare.eq_ignore_ascii_case("no") {
        return Ok(Screening::NotApplicable);
    }
    let line = trimmed
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .ok_or_else(|| "empty answer; give the model name or NO".to_string())?;
    let name = match line.split_once(':') {
        Some((key, rest)) if key.trim().eq_ignore_ascii_case("model") => rest.trim(),
        _ => line,
    };
    let name = name.trim_matches(|c| c == '"' || c == '\'').trim();
    if name.is_empty() {
        return Err("the answer names no model; give the model name or NO".into());
    }
    if strip_terminal_punct(name).eq_ignore_ascii_case("no") {
        return Ok(Screening::NotApplicable);
    }
    Ok(Screening::Model(name.to_string()))
}

static MAIN_TABLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)main\s+results?\s+table\s*:\s*table\s*(\d+)").unwrap());
static ANY_TABLE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\btable\s*(\d+)").unwrap());

/// Table number named by the answer, preferring the
/// `Main Results Table: Table k` form.
pub fn parse_table_choice(text: &str) -> Result<u32, String> {
    let caps = MAIN_TABLE
        .captures(text)
        .or_else(|| ANY_TABLE.captures(text))
        .ok_or_else(|| "no table number found; answer as `Main Results Table: Table k`".to_string())?;
    caps[1]
        .parse()
        .map_err(|_| format!("table number `{}` is out of range", &caps[1]))
}

static TRIPLE_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:[-*•]|\d+[.)])?\s*\((.*)\)\s*[,;.]?\s*$").unwrap());

/// Parse `(dataset, metric, result)` lines. Other lines are ignored. The
/// first comma ends the dataset and the last comma starts the result, so
/// metrics may contain commas. An answer of `NONE` yields no triples.
pub fn parse_result_triples(text: &str) -> Result<Vec<ResultTriple>, String> {
    let mut out: Vec<ResultTriple> = Vec::new();
    let mut saw_candidate = false;
    for line in text.lines() {
        let Some(caps) = TRIPLE_LINE.captures(line) else {
            continue;
        };
        saw_candidate = true;
        let inner = &caps[1];
        let (Some(first), Some(last)) = (inner.find(','), inner.rfind(',')) else {
            continue;
        };
        if first == last {
            continue;
        }
        let dataset = inner[..first].trim();
        let metric = inner[first + 1..last].trim();
        let result = inner[last + 1..].trim();
        if dataset.is_empty() || metric.is_empty() || result.is_empty() {
            continue;
        }
        let triple = ResultTriple {
            dataset: dataset.to_string(),
            metric: metric.to_string(),
            result: result.to_string(),
        };
        if !out.contains(&triple) {
            out.push(triple);
        }
    }
    if out.is_empty() {
        let bare = strip_terminal_punct(text);
        if bare.eq_ignore_ascii_case("none") {
            return Ok(out);
        }
        return Err(if saw_candidate {
            "no line had three non-empty comma-separated parts; use (dataset, metric, result)".into()
        } else {
            "no (dataset, metric, result) lines found".into()
        });
    }
    Ok(out)
}

/// The innovation answer: first non-empty line, with an optional
/// `Innovation:` label removed.
pub fn parse_innovation(text: &str) -> Result<String, String> {
    let line = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .ok_or_else(|| "empty answer; give the single summary sentence".to_string())?;
    let line = match line.split_once(':') {
        Some((key, rest)) if key.trim().eq_ignore_ascii_case("innovation") => rest.trim(),
        _ => line,
    };
    let line = line.trim_matches(|c| c == '"' || c == '\'').trim();
    if line.is_empty() {
        return Err("empty answer; give the single summary sentence".into());
    }
    Ok(line.to_string())
}

/// The re-extraction answer: one value, or `None` for `NONE`.
pub fn parse_reextraction(text: &str) -> Result<Option<String>, String> {
    let line = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .ok_or_else(|| "empty answer; give the corrected value or NONE".to_string())?;
    let value = line.trim_matches(|c| c == '"' || c == '\'').trim();
    if strip_terminal_punct(value).eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    Ok(Some(value.to_string()))
}
