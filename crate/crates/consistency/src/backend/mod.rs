//! Chat-completion backends.
//!
//! Everything that needs a model reply goes through the [`ChatBackend`]
//! trait: the live HTTP client, the deterministic scripted mock, and the
//! caching wrapper that can sit in front of either. Requests carry routing
//! metadata (question id, sample index, stage) so the mock can be a pure
//! function of the script and the request.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{Message, Role, SamplingParams};

pub mod cache;
pub mod live;
pub mod mock;

pub use cache::CachedBackend;
pub use live::{LiveBackend, LiveConfig, RetryPolicy};
pub use mock::{MockBackend, MockScript, MockScriptEntry, DEFAULT_TRACE_TEMPLATE};

/// Pipeline stage a request belongs to. The mock backend dispatches on
/// this; the live backend ignores it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Solve,
    Extract,
    MajorityJudge,
    AgreementJudge,
    TruthJudge,
    Critique,
    Revise,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Solve => "solve",
            Stage::Extract => "extract",
            Stage::MajorityJudge => "majority_judge",
            Stage::AgreementJudge => "agreement_judge",
            Stage::TruthJudge => "truth_judge",
            Stage::Critique => "critique",
            Stage::Revise => "revise",
        }
    }
}

/// Routing metadata attached to every request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestMeta {
    pub question_id: String,
    /// Index of the sample within its stage; also the reflection iteration
    /// number for critique and revise requests.
    pub sample_index: u32,
    pub stage: Stage,
}

/// One chat-completion request.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub params: SamplingParams,
    pub meta: RequestMeta,
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<()> {
        if self.model_id.is_empty() {
            return Err(Error::Config("model_id is empty".into()));
        }
        if self.messages.is_empty() {
            return Err(Error::Config("request has no messages".into()));
        }
        match self.messages[0].role {
            Role::System | Role::User => {}
        }
        self.params.validate()
    }
}

/// A completed request: the assistant text plus the raw provider body it
/// was parsed from (which is what the cache stores).
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub content: String,
    pub raw_body: String,
    pub latency_ms: u64,
    pub cached: bool,
}

/// Anything that can answer chat-completion requests.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion>;

    /// Short label for manifests and logs.
    fn name(&self) -> &'static str;
}

#[derive(Serialize)]
struct CacheKeyRepr<'a> {
    model_id: &'a str,
    messages: Vec<[&'a str; 2]>,
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
    seed: Option<u64>,
    sample_index: u32,
}

/// Stable cache key for a request: the SHA-256 hex digest of a canonical
/// JSON encoding of (model_id, messages, temperature, top_p, max_tokens,
/// seed, sample_index). Field order is fixed by the struct, so equal
/// requests always share a key.
pub fn cache_key(request: &CompletionRequest) -> String {
    let repr = CacheKeyRepr {
        model_id: &request.model_id,
        messages: request
            .messages
            .iter()
            .map(|m| [m.role.as_str(), m.content.as_str()])
            .collect(),
        temperature: request.params.temperature,
        top_p: request.params.top_p,
        max_tokens: request.params.max_tokens,
        seed: request.params.seed,
        sample_index: request.meta.sample_index,
    };
    let json = serde_json::to_vec(&repr).expect("cache key serialization cannot fail");
    hex::encode(Sha256::digest(&json))
}

/// Pulls `choices[0].message.content` out of a chat-completion response
/// body.
pub fn parse_chat_body(body: &str) -> Result<String> {
    let value: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| Error::MalformedResponse(format!("body is not JSON: {e}")))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
        .map(|s| s.to_string())
        .ok_or_else(|| Error::MalformedResponse("body lacks choices[0].message.content".into()))
}

/// Encodes assistant text as a minimal chat-completion body, used by
/// backends that have no provider body of their own.
pub fn synthesize_chat_body(content: &str, model_id: &str) -> String {
    serde_json::json!({
        "model": model_id,
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}],
    })
    .to_string()
}

/// Wrapper that counts how many requests reach the inner backend. The
/// cache test uses it to prove a warmed cache sends zero calls through.
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicU64,
}

impl<B: ChatBackend> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingBackend {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<B: ChatBackend> ChatBackend for CountingBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }

    fn name(&self) -> &'static str {
        self.inner.name()
    }
}

/// Wrapper that records every request it forwards, so tests can assert on
/// the exact prompts a pipeline sent.
pub struct RecordingBackend<B> {
    inner: B,
    requests: Mutex<Vec<CompletionRequest>>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        self.requests.lock().unwrap().push(request.clone());
        self.inner.complete(request)
    }

    fn name(&self) -> &'static str {
        self.inner.name()
    }
}
