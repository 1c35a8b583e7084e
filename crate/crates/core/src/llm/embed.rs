//! Embedding providers.

use reqwest::blocking::Client;
use serde_json::{json, Value};
use thiserror::Error;

use super::live::post_json;
use super::BackendError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbedError {
    #[error("embedding provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("input text {index} is empty")]
    EmptyInputText { index: usize },
    #[error("provider returned {got} vectors for {expected} inputs")]
    CountMismatch { expected: usize, got: usize },
    #[error("provider returned a vector of dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("provider returned a non-finite component")]
    NonFinite,
    #[error("embedding request rejected: {0}")]
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub provider_id: String,
}

impl EmbeddingVector {
    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Copy scaled to unit length; a zero vector stays zero.
    pub fn normalized(&self) -> Vec<f64> {
        let n = self.norm();
        if n == 0.0 {
            return self.values.clone();
        }
        self.values.iter().map(|v| v / n).collect()
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError>;
}

fn check_inputs(texts: &[String]) -> Result<(), EmbedError> {
    match texts.iter().position(|t| t.trim().is_empty()) {
        Some(index) => Err(EmbedError::EmptyInputText { index }),
        None => Ok(()),
    }
}

pub const MOCK_EMBEDDING_DIM: usize = 64;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Offline embedder: character trigram counts hashed into 64 buckets.
///
/// The text is lower-cased and padded with one space on each side; every
/// window of three consecutive characters is hashed with FNV-1a over its
/// UTF-8 bytes and counted in bucket `hash % 64`. The count vector is then
/// scaled to unit length.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashedTrigramEmbedder;

impl HashedTrigramEmbedder {
    pub fn embed_one(text: &str) -> Vec<f64> {
        let padded: Vec<char> = format!(" {} ", text.to_lowercase()).chars().collect();
        let mut counts = vec![0.0f64; MOCK_EMBEDDING_DIM];
        let mut gram = String::with_capacity(12);
        for window in padded.windows(3) {
            gram.clear();
            gram.extend(window);
            counts[(fnv1a64(gram.as_bytes()) % MOCK_EMBEDDING_DIM as u64) as usize] += 1.0;
        }
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 0.0 {
            counts.iter_mut().for_each(|c| *c /= norm);
        }
        counts
    }
}

impl EmbeddingProvider for HashedTrigramEmbedder {
    fn id(&self) -> &str {
        "mock"
    }

    fn dimension(&self) -> usize {
        MOCK_EMBEDDING_DIM
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        check_inputs(texts)?;
        Ok(texts
            .iter()
            .map(|t| EmbeddingVector {
                values: Self::embed_one(t),
                provider_id: "mock".to_string(),
            })
            .collect())
    }
}

/// Remote embedder speaking the common `/embeddings` wire format.
/// Configured from `AKG_EMB_URL` and `AKG_EMB_KEY`.
pub struct LiveEmbedder {
    url: String,
    key: Option<String>,
    model: Option<String>,
    dimension: std::sync::OnceLock<usize>,
    client: Client,
}

impl LiveEmbedder {
    pub fn new(url: String, key: Option<String>, model: Option<String>) -> Result<Self, EmbedError> {
        let client = Client::builder()
            .timeout(std::time::Duration::from_secs(60))
            .build()
            .map_err(|e| EmbedError::Rejected(e.to_string()))?;
        Ok(LiveEmbedder {
            url,
            key,
            model,
            dimension: std::sync::OnceLock::new(),
            client,
        })
    }

    pub fn from_env() -> Option<Result<Self, EmbedError>> {
        let url = std::env::var("AKG_EMB_URL").ok().filter(|s| !s.is_empty())?;
        let key = std::env::var("AKG_EMB_KEY").ok().filter(|s| !s.is_empty());
        let model = std::env::var("AKG_EMB_MODEL").ok().filter(|s| !s.is_empty());
        Some(Self::new(url, key, model))
    }
}

impl EmbeddingProvider for LiveEmbedder {
    fn id(&self) -> &str {
        "live"
    }

    /// Zero until the first successful call fixes it.
    fn dimension(&self) -> usize {
        self.dimension.get().copied().unwrap_or(0)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        check_inputs(texts)?;
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut body = json!({ "input": texts });
        if let Some(model) = &self.model {
            body["model"] = json!(model);
        }
        let value = post_json(&self.client, &self.url, self.key.as_deref(), &body).map_err(|e| {
            match e {
                BackendError::Unreachable(m) | BackendError::RateLimited(m) => {
                    EmbedError::ProviderUnreachable(m)
                }
                other => EmbedError::Rejected(other.to_string()),
            }
        })?;
        let data = value
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| EmbedError::Rejected("response has no `data` array".into()))?;
        if data.len() != texts.len() {
            return Err(EmbedError::CountMismatch {
                expected: texts.len(),
                got: data.len(),
            });
        }
        let mut out = Vec::with_capacity(data.len());
        for item in data {
            let values: Vec<f64> = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| EmbedError::Rejected("item has no `embedding`".into()))?
                .iter()
                .map(|v| v.as_f64().ok_or(EmbedError::NonFinite))
                .collect::<Result<_, _>>()?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(EmbedError::NonFinite);
            }
            let dim = *self.dimension.get_or_init(|| values.len());
            if values.len() != dim {
                return Err(EmbedError::DimensionMismatch {
                    expected: dim,
                    got: values.len(),
                });
            }
            out.push(EmbeddingVector {
                values,
                provider_id: "live".into(),
            });
        }
        Ok(out)
    }
}
