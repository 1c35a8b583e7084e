//! Uniform access to completion and embedding backends.
//!
//! Every LLM call in the pipeline goes through [`Gateway::complete`], which
//! renders a catalog template, retries transient failures and appends an
//! entry to the call ledger. The mock backend answers from fixture files
//! keyed by [`prompt_digest`].

mod embed;
mod live;
mod mock;
mod templates;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use embed::{
    cosine, fnv1a64, EmbedError, EmbeddingProvider, EmbeddingVector, HashedTrigramEmbedder,
    LiveEmbedder, MOCK_EMBEDDING_DIM,
};
pub use live::{LiveBackend, LiveConfig};
pub use mock::{FixtureBackend, FixtureMode, ScriptedBackend, ScriptedReply};
pub use templates::{PromptTemplate, TemplateCatalog, CATALOG_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{0}` is already in the catalog")]
    DuplicateTemplate(String),
    #[error("template `{template_id}` is missing slot `{slot}`")]
    MissingSlot { template_id: String, slot: String },
    #[error("backend unreachable after {attempts} attempt(s): {message}")]
    BackendUnreachable { attempts: u32, message: String },
    #[error("rate limited after {attempts} attempt(s): {message}")]
    RateLimited { attempts: u32, message: String },
    #[error("no fixture for digest {digest} (template `{template_id}`)")]
    FixtureMissing { digest: String, template_id: String },
    #[error("backend rejected the request: {0}")]
    Rejected(String),
}

/// Failure reported by a backend for a single attempt.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("no fixture for digest {digest}")]
    FixtureMissing { digest: String },
    #[error("rejected: {0}")]
    Rejected(String),
}

impl BackendError {
    fn is_transient(&self) -> bool {
        matches!(self, BackendError::Unreachable(_) | BackendError::RateLimited(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub max_tokens: u32,
    pub temperature: f32,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams {
            max_tokens: 1024,
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub template_id: String,
    pub slots: BTreeMap<String, String>,
    pub params: DecodingParams,
    /// Notes appended after the rendered template, used when re-asking
    /// after an unusable answer.
    pub feedback: Vec<String>,
}

impl CompletionRequest {
    pub fn new(template_id: impl Into<String>) -> Self {
        CompletionRequest {
            template_id: template_id.into(),
            slots: BTreeMap::new(),
            params: DecodingParams::default(),
            feedback: Vec::new(),
        }
    }

    pub fn slot(mut self, name: &str, value: impl Into<String>) -> Self {
        self.slots.insert(name.to_string(), value.into());
        self
    }

    pub fn with_params(mut self, params: DecodingParams) -> Self {
        self.params = params;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub backend_id: String,
    pub template_id: String,
    pub digest: String,
    /// Full prompt sent to the backend.
    pub prompt: String,
    pub latency: Duration,
    pub prompt_tokens: Option<u32>,
    pub completion_tokens: Option<u32>,
    pub temperature: f32,
    pub attempts: u32,
    /// Set when the backend returned an empty string.
    pub empty: bool,
}

/// What a backend sees for one attempt.
#[derive(Debug, Clone, Copy)]
pub struct BackendCall<'a> {
    pub template_id: &'a str,
    pub prompt: &'a str,
    pub digest: &'a str,
    pub params: &'a DecodingParams,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BackendReply {
    pub text: String,
    pub prompt_tokens: Option<u32>,
    pub completion_tokens: Option<u32>,
}

impl BackendReply {
    pub fn text(text: impl Into<String>) -> Self {
        BackendReply {
            text: text.into(),
            ..Default::default()
        }
    }
}

pub trait CompletionBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, call: BackendCall<'_>) -> Result<BackendReply, BackendError>;
}

/// Fixture key: hex SHA-256 of `template_id`, a newline, then the prompt.
pub fn prompt_digest(template_id: &str, prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(template_id.as_bytes());
    hasher.update(b"\n");
    hasher.update(prompt.as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// Same attempt budget, no sleeping. For tests and fixture replays.
    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts,
            base_delay: Duration::ZERO,
        }
    }

    /// Delay before attempt `n + 1` after `n` failures: base, 2×base, 4×base...
    pub fn delay_after(&self, failures: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(failures.saturating_sub(1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub template_id: String,
    pub digest: String,
    pub backend_id: String,
    pub prompt: String,
}

impl fmt::Display for LedgerEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.template_id, &self.digest[..12.min(self.digest.len())], self.backend_id)
    }
}

/// Counting semaphore bounding in-flight completions.
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Permits {
    fn new(n: usize) -> Self {
        Permits {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct Gateway {
    backend: Arc<dyn CompletionBackend>,
    catalog: TemplateCatalog,
    retry: RetryPolicy,
    defaults: DecodingParams,
    ledger: Mutex<Vec<LedgerEntry>>,
    permits: Permits,
    sleep: Box<dyn Fn(Duration) + Send + Sync>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.id())
            .field("retry", &self.retry)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn CompletionBackend>) -> Self {
        Gateway {
            backend,
            catalog: TemplateCatalog::shipped(),
            retry: RetryPolicy::default(),
            defaults: DecodingParams::default(),
            ledger: Mutex::new(Vec::new()),
            permits: Permits::new(4),
            sleep: Box::new(std::thread::sleep),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_catalog(mut self, catalog: TemplateCatalog) -> Self {
        self.catalog = catalog;
        self
    }

    pub fn with_parallelism(mut self, cap: usize) -> Self {
        self.permits = Permits::new(cap);
        self
    }

    pub fn with_defaults(mut self, params: DecodingParams) -> Self {
        self.defaults = params;
        self
    }

    /// Replace the sleeper used between retries.
    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Box::new(sleep);
        self
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn catalog(&self) -> &TemplateCatalog {
        &self.catalog
    }

    pub fn default_params(&self) -> DecodingParams {
        self.defaults
    }

    /// A request for `template_id` carrying the gateway's default decoding params.
    pub fn request(&self, template_id: &str) -> CompletionRequest {
        CompletionRequest::new(template_id).with_params(self.defaults)
    }

    pub fn render_prompt(
        &self,
        template_id: &str,
        slots: &BTreeMap<String, String>,
    ) -> Result<String, GatewayError> {
        self.catalog.render(template_id, slots)
    }

    /// Full prompt text for a request, feedback included.
    pub fn prompt_for(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let mut prompt = self.catalog.render(&request.template_id, &request.slots)?;
        for note in &request.feedback {
            prompt.push_str("\n\n");
            prompt.push_str(note);
        }
        Ok(prompt)
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        let prompt = self.prompt_for(request)?;
        let digest = prompt_digest(&request.template_id, &prompt);
        let call = BackendCall {
            template_id: &request.template_id,
            prompt: &prompt,
            digest: &digest,
            params: &request.params,
        };

        let started = Instant::now();
        let mut attempts = 0;
        let outcome = {
            let _permit = self.permits.acquire();
            loop {
                attempts += 1;
                match self.backend.complete(call) {
                    Ok(reply) => break Ok(reply),
                    Err(err) if err.is_transient() && attempts < self.retry.max_attempts => {
                        (self.sleep)(self.retry.delay_after(attempts));
                    }
                    Err(err) => break Err(err),
                }
            }
        };
        self.ledger
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(LedgerEntry {
                template_id: request.template_id.clone(),
                digest: digest.clone(),
                backend_id: self.backend.id().to_string(),
                prompt: prompt.clone(),
            });

        match outcome {
            Ok(reply) => Ok(CompletionResult {
                empty: reply.text.is_empty(),
                text: reply.text,
                backend_id: self.backend.id().to_string(),
                template_id: request.template_id.clone(),
                digest,
                prompt,
                latency: started.elapsed(),
                prompt_tokens: reply.prompt_tokens,
                completion_tokens: reply.completion_tokens,
                temperature: request.params.temperature,
                attempts,
            }),
            Err(BackendError::Unreachable(message)) => {
                Err(GatewayError::BackendUnreachable { attempts, message })
            }
            Err(BackendError::RateLimited(message)) => {
                Err(GatewayError::RateLimited { attempts, message })
            }
            Err(BackendError::FixtureMissing { digest }) => Err(GatewayError::FixtureMissing {
                digest,
                template_id: request.template_id.clone(),
            }),
            Err(BackendError::Rejected(message)) => Err(GatewayError::Rejected(message)),
        }
    }

    /// Chronological record of completion calls since the last reset.
    pub fn call_ledger(&self) -> Vec<LedgerEntry> {
        self.ledger.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn ledger_len(&self) -> usize {
        self.ledger.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn reset_ledger(&self) {
        self.ledger.lock().unwrap_or_else(|e| e.into_inner()).clear();
    }

    /// Number of calls per template id.
    pub fn ledger_summary(&self) -> BTreeMap<String, usize> {
        let mut summary = BTreeMap::new();
        for entry in self.ledger.lock().unwrap_or_else(|e| e.into_inner()).iter() {
            *summary.entry(entry.template_id.clone()).or_default() += 1;
        }
        summary
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    #[test]
    fn digest_is_stable_and_separates_template() {
        let a = prompt_digest("intent", "hello");
        assert_eq!(a.len(), 64);
        assert_eq!(a, prompt_digest("intent", "hello"));
        assert_ne!(a, prompt_digest("intenth", "ello"));
    }

    #[test]
    fn retries_transient_failures() {
        let backend = ScriptedBackend::new(vec![
            ScriptedReply::Fail(BackendError::Unreachable("down".into())),
            ScriptedReply::Fail(BackendError::RateLimited("slow".into())),
            ScriptedReply::Text("ok".into()),
        ]);
        let slept = Arc::new(AtomicU32::new(0));
        let s = slept.clone();
        let gw = Gateway::new(Arc::new(backend))
            .with_sleeper(move |d| {
                s.fetch_add(d.as_secs() as u32, Ordering::SeqCst);
            });
        let res = gw
            .complete(&gw.request("intent").slot("question", "q"))
            .unwrap();
        assert_eq!(res.text, "ok");
        assert_eq!(res.attempts, 3);
        // 1s then 2s of backoff.
        assert_eq!(slept.load(Ordering::SeqCst), 3);
        assert_eq!(gw.call_ledger().len(), 1);
    }

    #[test]
    fn gives_up_after_limit() {
        let backend = ScriptedBackend::new(vec![
            ScriptedReply::Fail(BackendError::RateLimited("a".into())),
            ScriptedReply::Fail(BackendError::RateLimited("b".into())),
            ScriptedReply::Fail(BackendError::RateLimited("c".into())),
            ScriptedReply::Text("never".into()),
        ]);
        let gw = Gateway::new(Arc::new(backend)).with_retry(RetryPolicy::immediate(3));
        let err = gw
            .complete(&gw.request("intent").slot("question", "q"))
            .unwrap_err();
        assert_eq!(
            err,
            GatewayError::RateLimited {
                attempts: 3,
                message: "c".into()
            }
        );
    }

    #[test]
    fn permanent_errors_are_not_retried() {
        let backend = ScriptedBackend::new(vec![
            ScriptedReply::Fail(BackendError::Rejected("bad".into())),
            ScriptedReply::Text("x".into()),
        ]);
        let gw = Gateway::new(Arc::new(backend)).with_retry(RetryPolicy::immediate(3));
        let err = gw
            .complete(&gw.request("intent").slot("question", "q"))
            .unwrap_err();
        assert_eq!(err, GatewayError::Rejected("bad".into()));
    }

    #[test]
    fn ledger_records_in_order() {
        let gw = Gateway::new(Arc::new(ScriptedBackend::echo()));
        assert!(gw.call_ledger().is_empty());
        gw.complete(&gw.request("intent").slot("question", "a")).unwrap();
        let ledger = gw.call_ledger();
        assert_eq!(ledger.len(), 1);
        assert_eq!(ledger[0].template_id, "intent");
        assert_eq!(ledger[0].backend_id, "scripted");
        gw.reset_ledger();
        assert!(gw.call_ledger().is_empty());
    }

    #[test]
    fn temperature_is_recorded_and_empty_flagged() {
        let gw = Gateway::new(Arc::new(ScriptedBackend::new(vec![ScriptedReply::Text(
            String::new(),
        )])));
        let res = gw.complete(&gw.request("intent").slot("question", "q")).unwrap();
        assert!(res.empty);
        assert_eq!(res.temperature, 0.0);
    }

    #[test]
    fn feedback_is_appended() {
        let gw = Gateway::new(Arc::new(ScriptedBackend::echo()));
        let mut req = gw.request("intent").slot("question", "q");
        req.feedback.push("try again".into());
        let prompt = gw.prompt_for(&req).unwrap();
        assert!(prompt.ends_with("\n\ntry again"));
    }

    #[test]
    fn backoff_schedule() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay_after(1), Duration::from_secs(1));
        assert_eq!(p.delay_after(2), Duration::from_secs(2));
        assert_eq!(p.delay_after(3), Duration::from_secs(4));
    }
}
