//! Live HTTP backend for OpenAI-compatible chat-completion endpoints.
//!
//! Sends `POST {base_url}/chat/completions` with the standard body fields
//! and reads `choices[0].message.content` back. Transport failures and
//! HTTP 429/5xx responses are retried with fixed backoff; other error
//! statuses surface immediately.

use std::time::{Duration, Instant};

use crate::backend::{parse_chat_body, ChatBackend, Completion, CompletionRequest};
use crate::error::{Error, Result};

/// Environment variable the CLI reads the API key from.
pub const API_KEY_ENV: &str = "CONSISTENCY_API_KEY";

/// Backoff schedule. One initial attempt is always made; each delay buys
/// one more attempt after a retryable failure.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub delays_ms: Vec<u64>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            delays_ms: vec![1000, 2000, 4000],
        }
    }
}

impl RetryPolicy {
    /// No retries; used by tests that want failures to surface at once.
    pub fn none() -> Self {
        RetryPolicy { delays_ms: vec![] }
    }

    fn max_attempts(&self) -> u32 {
        self.delays_ms.len() as u32 + 1
    }
}

/// Connection settings for a live endpoint.
#[derive(Debug, Clone)]
pub struct LiveConfig {
    /// Endpoint root, e.g. `https://api.example.com/v1`.
    pub base_url: String,
    /// Bearer token; sent as an Authorization header when present.
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            base_url: "http://localhost:8000/v1".into(),
            api_key: None,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
        }
    }
}

pub struct LiveBackend {
    agent: ureq::Agent,
    config: LiveConfig,
    url: String,
}

enum AttemptFailure {
    Transport(String),
    RetryableStatus(u16, String),
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> LiveBackend {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let url = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
        LiveBackend { agent, config, url }
    }

    fn body_for(&self, request: &CompletionRequest) -> serde_json::Value {
        let messages: Vec<serde_json::Value> = request
            .messages
            .iter()
            .map(|m| serde_json::json!({"role": m.role.as_str(), "content": m.content}))
            .collect();
        let mut body = serde_json::json!({
            "model": request.model_id,
            "messages": messages,
            "temperature": request.params.temperature,
            "top_p": request.params.top_p,
            "max_tokens": request.params.max_tokens,
        });
        if let Some(seed) = request.params.seed {
            body["seed"] = serde_json::json!(seed);
        }
        body
    }

    fn attempt(
        &self,
        body: &serde_json::Value,
    ) -> std::result::Result<std::result::Result<String, Error>, AttemptFailure> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Err(AttemptFailure::Transport(e.to_string())),
        };
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .unwrap_or_else(|e| format!("<unreadable body: {e}>"));

        if (200..300).contains(&status) {
            Ok(Ok(text))
        } else if status == 429 || (500..600).contains(&status) {
            Err(AttemptFailure::RetryableStatus(status, text))
        } else {
            Ok(Err(Error::Http {
                status,
                body: truncate(&text, 2000),
            }))
        }
    }
}

impl ChatBackend for LiveBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        request.validate()?;
        let body = self.body_for(request);
        let started = Instant::now();
        let mut last_failure: Option<AttemptFailure> = None;

        for attempt in 0..self.config.retry.max_attempts() {
            if attempt > 0 {
                let delay = self.config.retry.delays_ms[(attempt - 1) as usize];
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(&body) {
                Ok(Ok(raw_body)) => {
                    let content = parse_chat_body(&raw_body)?;
                    return Ok(Completion {
                        content,
                        raw_body,
                        latency_ms: started.elapsed().as_millis() as u64,
                        cached: false,
                    });
                }
                Ok(Err(fatal)) => return Err(fatal),
                Err(failure) => {
                    match &failure {
                        AttemptFailure::Transport(msg) => {
                            log::warn!("attempt {}: transport failure: {msg}", attempt + 1)
                        }
                        AttemptFailure::RetryableStatus(status, _) => {
                            log::warn!("attempt {}: retryable HTTP {status}", attempt + 1)
                        }
                    }
                    last_failure = Some(failure);
                }
            }
        }

        let attempts = self.config.retry.max_attempts();
        match last_failure.expect("at least one attempt ran") {
            AttemptFailure::Transport(message) => Err(Error::Transport { attempts, message }),
            AttemptFailure::RetryableStatus(status, text) => Err(Error::Http {
                status,
                body: truncate(&text, 2000),
            }),
        }
    }

    fn name(&self) -> &'static str {
        "live"
    }
}

fn truncate(s: &str, max: usize) -> String {
    if s.len() <= max {
        s.to_string()
    } else {
        let mut end = max;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}…", &s[..end])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{RequestMeta, Stage};
    use crate::types::{Message, SamplingParams};

    fn request() -> CompletionRequest {
        CompletionRequest {
            model_id: "m".into(),
            messages: vec![Message::user("hello")],
            params: SamplingParams::greedy(16),
            meta: RequestMeta {
                question_id: "q".into(),
                sample_index: 0,
                stage: Stage::Solve,
            },
        }
    }

    #[test]
    fn unreachable_endpoint_yields_transport_error() {
        let backend = LiveBackend::new(LiveConfig {
            base_url: "http://127.0.0.1:9".into(),
            api_key: None,
            timeout_secs: 1,
            retry: RetryPolicy::none(),
        });
        let err = backend.complete(&request()).unwrap_err();
        assert!(err.is_transport(), "got {err:?}");
    }

    #[test]
    fn retry_policy_counts_attempts() {
        assert_eq!(RetryPolicy::default().max_attempts(), 4);
        assert_eq!(RetryPolicy::none().max_attempts(), 1);
    }

    #[test]
    fn request_body_includes_seed_only_when_set() {
        let backend = LiveBackend::new(LiveConfig::default());
        let without = backend.body_for(&request());
        assert!(without.get("seed").is_none());
        assert_eq!(without["model"], "m");
        assert_eq!(without["temperature"], 0.0);
        assert_eq!(without["top_p"], 1.0);
        assert_eq!(without["max_tokens"], 16);
        assert_eq!(without["messages"][0]["role"], "user");

        let mut req = request();
        req.params.seed = Some(7);
        let with = backend.body_for(&req);
        assert_eq!(with["seed"], 7);
    }

    #[test]
    fn truncate_respects_char_boundaries() {
        let s = "ααααα";
        let t = truncate(s, 3);
        assert!(t.starts_with('α'));
    }
}
