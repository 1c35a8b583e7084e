//! HTTP backend speaking the common chat-completions wire format.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{BackendCall, BackendError, BackendReply, CompletionBackend};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveConfig {
    pub url: String,
    pub key: Option<String>,
    pub model: String,
    pub timeout: Duration,
}

impl LiveConfig {
    /// Reads `AKG_LLM_URL`, `AKG_LLM_KEY` and `AKG_LLM_MODEL`.
    pub fn from_env() -> Option<LiveConfig> {
        let url = std::env::var("AKG_LLM_URL").ok().filter(|s| !s.is_empty())?;
        Some(LiveConfig {
            url,
            key: std::env::var("AKG_LLM_KEY").ok().filter(|s| !s.is_empty()),
            model: std::env::var("AKG_LLM_MODEL").unwrap_or_else(|_| "gpt-4-0613".to_string()),
            timeout: Duration::from_secs(120),
        })
    }
}

pub struct LiveBackend {
    config: LiveConfig,
    client: Client,
}

impl std::fmt::Debug for LiveBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveBackend")
            .field("url", &self.config.url)
            .field("model", &self.config.model)
            .finish()
    }
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Rejected(format!("http client: {e}")))?;
        Ok(LiveBackend { config, client })
    }
}

/// Map an HTTP failure onto the retry classes.
pub(crate) fn classify_status(status: StatusCode, body: String) -> BackendError {
    if status == StatusCode::TOO_MANY_REQUESTS {
        BackendError::RateLimited(body)
    } else if status.is_server_error() {
        BackendError::Unreachable(format!("{status}: {body}"))
    } else {
        BackendError::Rejected(format!("{status}: {body}"))
    }
}

pub(crate) fn post_json(
    client: &Client,
    url: &str,
    key: Option<&str>,
    body: &Value,
) -> Result<Value, BackendError> {
    let mut req = client.post(url).json(body);
    if let Some(key) = key {
        req = req.bearer_auth(key);
    }
    let resp = req
        .send()
        .map_err(|e| BackendError::Unreachable(e.to_string()))?;
    let status = resp.status();
    if !status.is_success() {
        let text = resp.text().unwrap_or_default();
        return Err(classify_status(status, text));
    }
    resp.json::<Value>()
        .map_err(|e| BackendError::Rejected(format!("malformed response: {e}")))
}

impl CompletionBackend for LiveBackend {
    fn id(&self) -> &str {
        "live"
    }

    fn complete(&self, call: BackendCall<'_>) -> Result<BackendReply, BackendError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": call.prompt}],
            "temperature": call.params.temperature,
            "max_tokens": call.params.max_tokens,
        });
        let value = post_json(&self.client, &self.config.url, self.config.key.as_deref(), &body)?;
        let text = value
            .pointer("/choices/0/message/content")
            .or_else(|| value.pointer("/choices/0/text"))
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::Rejected("response has no completion text".into()))?;
        let usage = |k: &str| {
            value
                .pointer(&format!("/usage/{k}"))
                .and_then(Value::as_u64)
                .map(|n| n as u32)
        };
        Ok(BackendReply {
            text: text.to_string(),
            prompt_tokens: usage("prompt_tokens"),
            completion_tokens: usage("completion_tokens"),
        })
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{Gateway, GatewayError, RetryPolicy};
    use std::sync::Arc;

    fn backend(url: String) -> LiveBackend {
        LiveBackend::new(LiveConfig {
            url,
            key: Some("k".into()),
            model: "test-model".into(),
            timeout: Duration::from_secs(5),
        })
        .unwrap()
    }

    #[test]
    fn parses_chat_completion() {
        let (url, rx) = test_server::serve(vec![(
            200,
            r#"{"choices":[{"message":{"content":"hi"}}],"usage":{"prompt_tokens":5,"completion_tokens":1}}"#.into(),
        )]);
        let gw = Gateway::new(Arc::new(backend(url)));
        let res = gw.complete(&gw.request("intent").slot("question", "q")).unwrap();
        assert_eq!(res.text, "hi");
        assert_eq!(res.prompt_tokens, Some(5));
        assert_eq!(res.backend_id, "live");
        let sent: Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
        assert_eq!(sent["model"], "test-model");
        assert_eq!(sent["temperature"], 0.0);
    }

    #[test]
    fn rate_limit_then_success() {
        let (url, _rx) = test_server::serve(vec![
            (429, "{}".into()),
            (503, "{}".into()),
            (200, r#"{"choices":[{"message":{"content":"ok"}}]}"#.into()),
        ]);
        let gw = Gateway::new(Arc::new(backend(url))).with_retry(RetryPolicy::immediate(3));
        let res = gw.complete(&gw.request("intent").slot("question", "q")).unwrap();
        assert_eq!(res.attempts, 3);
    }

    #[test]
    fn unreachable_backend() {
        // Port from a listener that is dropped immediately.
        let addr = std::net::TcpListener::bind("127.0.0.1:0")
            .unwrap()
            .local_addr()
            .unwrap();
        let gw = Gateway::new(Arc::new(backend(format!("http://{addr}/x"))))
            .with_retry(RetryPolicy::immediate(2));
        let err = gw.complete(&gw.request("intent").slot("question", "q")).unwrap_err();
        assert!(matches!(err, GatewayError::BackendUnreachable { attempts: 2, .. }));
    }
}
