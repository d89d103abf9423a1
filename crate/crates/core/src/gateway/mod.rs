//! Chat-completion access for the pipelines.
//!
//! A [`ChatBackend`] answers one request at a time. Three backends ship:
//! [`HttpBackend`] for OpenAI-compatible endpoints, [`ScriptedBackend`] for
//! hand-written replies, and [`ReplayBackend`] which answers from a recorded
//! transcript. The [`Gateway`] wraps a backend, applies sampling defaults and
//! appends every completed exchange to the active [`RecordingSession`].

mod http;
mod replay;
mod retry;
mod scripted;
mod transcript;

pub use http::{ConcurrencyLimiter, HttpBackend, HttpConfig, ENV_API_KEY, ENV_CONCURRENCY, ENV_ENDPOINT};
pub use replay::ReplayBackend;
pub use retry::RetryPolicy;
pub use scripted::{FnBackend, ScriptedBackend};
pub use transcript::{read_transcript, RecordingSession, TranscriptEntry, TranscriptHeader, TranscriptSummary};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::time::{Duration, Instant};

pub const DEFAULT_TEMPERATURE: f64 = 0.6;
pub const DEFAULT_MAX_TOKENS: u32 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    /// Pipeline stage label, e.g. `specialist_statement/c1/cardiology/r2`.
    pub request_tag: String,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, request_tag: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        ChatRequest {
            model_id: model_id.into(),
            messages,
            temperature: None,
            max_tokens: None,
            request_tag: request_tag.into(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let first =
            self.messages.first().ok_or_else(|| GatewayError::InvalidRequest("messages must be non-empty".into()))?;
        if first.role == Role::Assistant {
            return Err(GatewayError::InvalidRequest("first message must have role system or user".into()));
        }
        if let Some(t) = self.temperature {
            if !(0.0..=2.0).contains(&t) {
                return Err(GatewayError::InvalidRequest(format!("temperature {t} outside [0, 2]")));
            }
        }
        Ok(())
    }

    /// Stable digest of the request tag and message contents, used as the replay key.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.request_tag.as_bytes());
        for message in &self.messages {
            hasher.update([0u8]);
            hasher.update(message.content.as_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: String,
    #[serde(default)]
    pub usage: Usage,
    #[serde(with = "duration_ms")]
    pub latency: Duration,
    pub attempt_count: u32,
}

mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("rate limited; gave up after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("malformed upstream response: {0}")]
    MalformedUpstreamResponse(String),
    #[error("upstream returned HTTP {status} after {attempts} attempt(s): {body}")]
    Upstream { status: u16, attempts: u32, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no recorded response for request `{request_tag}` (digest {digest})")]
    ReplayMiss { request_tag: String, digest: String },
    #[error("transcript {path}: duplicate request digest {digest} (tag `{request_tag}`)")]
    DuplicateKey { path: String, request_tag: String, digest: String },
    #[error("scripted backend has no reply left for `{request_tag}`")]
    ScriptExhausted { request_tag: String },
    #[error("transcript storage failure: {0}")]
    StorageFailure(String),
}

/// Anything that can answer a chat-completion request.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;

    /// Short description recorded with runs, e.g. `replay:fixtures/case1.jsonl`.
    fn describe(&self) -> String;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).complete(request)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).complete(request)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingDefaults {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for SamplingDefaults {
    fn default() -> Self {
        SamplingDefaults { temperature: DEFAULT_TEMPERATURE, max_tokens: DEFAULT_MAX_TOKENS }
    }
}

/// Backend plus per-run bookkeeping: defaults, transcript, exchange count.
pub struct Gateway<'a> {
    backend: &'a dyn ChatBackend,
    defaults: SamplingDefaults,
    recording: Option<RecordingSession>,
    exchanges: usize,
    digests: Vec<String>,
}

impl<'a> Gateway<'a> {
    pub fn new(backend: &'a dyn ChatBackend) -> Self {
        Gateway { backend, defaults: SamplingDefaults::default(), recording: None, exchanges: 0, digests: Vec::new() }
    }

    pub fn with_defaults(mut self, defaults: SamplingDefaults) -> Self {
        self.defaults = defaults;
        self
    }

    pub fn with_recording(mut self, session: RecordingSession) -> Self {
        self.recording = Some(session);
        self
    }

    pub fn backend(&self) -> &dyn ChatBackend {
        self.backend
    }

    /// Number of successful exchanges so far.
    pub fn exchanges(&self) -> usize {
        self.exchanges
    }

    /// Request digests of successful exchanges, in call order.
    pub fn digests(&self) -> &[String] {
        &self.digests
    }

    pub fn complete(
        &mut self,
        agent_id: &str,
        round: Option<u32>,
        mut request: ChatRequest,
    ) -> Result<ChatResponse, GatewayError> {
        request.temperature.get_or_insert(self.defaults.temperature);
        request.max_tokens.get_or_insert(self.defaults.max_tokens);
        request.validate()?;

        let started = Instant::now();
        let mut response = self.backend.complete(&request)?;
        if response.latency.is_zero() {
            response.latency = started.elapsed();
        }
        response.attempt_count = response.attempt_count.max(1);
        tracing::debug!(tag = %request.request_tag, agent_id, attempts = response.attempt_count, "exchange complete");

        self.exchanges += 1;
        self.digests.push(request.digest());
        if let Some(session) = self.recording.as_mut() {
            session.append(agent_id, round, &request, &response)?;
        }
        Ok(response)
    }

    /// Finishes the recording, if any, and returns its summary.
    pub fn finish(self) -> Result<Option<TranscriptSummary>, GatewayError> {
        self.recording.map(RecordingSession::close).transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unset_sampling_fields_get_defaults_and_are_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let backend = ScriptedBackend::queue(["hello"]);
        let session = RecordingSession::create(&path, "run-1").unwrap();
        let mut gw = Gateway::new(&backend).with_recording(session);
        let req = ChatRequest::new("qwen2.5-72b-instruct", "pure_plan", vec![ChatMessage::user("hi")]);
        let response = gw.complete("gp", None, req).unwrap();
        assert_eq!(response.content, "hello");
        assert_eq!(response.attempt_count, 1);
        gw.finish().unwrap();

        let (_, entries) = read_transcript(&path).unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].request.temperature, Some(0.6));
        assert_eq!(entries[0].request.max_tokens, Some(4096));
    }

    #[test]
    fn explicit_sampling_fields_are_kept() {
        let backend = FnBackend::new(|req: &ChatRequest| Ok(format!("{:?}", req.temperature)));
        let mut gw = Gateway::new(&backend);
        let mut req = ChatRequest::new("m", "t", vec![ChatMessage::user("x")]);
        req.temperature = Some(0.0);
        assert_eq!(gw.complete("gp", None, req).unwrap().content, "Some(0.0)");
    }

    #[test]
    fn request_validation() {
        let backend = ScriptedBackend::queue(["x"]);
        let mut gw = Gateway::new(&backend);
        let empty = ChatRequest::new("m", "t", vec![]);
        assert!(matches!(gw.complete("gp", None, empty), Err(GatewayError::InvalidRequest(_))));
        let assistant_first = ChatRequest::new("m", "t", vec![ChatMessage::assistant("x")]);
        assert!(matches!(gw.complete("gp", None, assistant_first), Err(GatewayError::InvalidRequest(_))));
        let mut hot = ChatRequest::new("m", "t", vec![ChatMessage::user("x")]);
        hot.temperature = Some(2.5);
        assert!(matches!(gw.complete("gp", None, hot), Err(GatewayError::InvalidRequest(_))));
    }

    #[test]
    fn digest_depends_on_tag_and_contents_only() {
        let a = ChatRequest::new("m1", "t", vec![ChatMessage::user("x")]);
        let mut b = ChatRequest::new("m2", "t", vec![ChatMessage::system("x")]);
        b.temperature = Some(1.0);
        assert_eq!(a.digest(), b.digest());
        let c = ChatRequest::new("m1", "u", vec![ChatMessage::user("x")]);
        assert_ne!(a.digest(), c.digest());
        let split = ChatRequest::new("m1", "t", vec![ChatMessage::user("ab")]);
        let joined = ChatRequest::new("m1", "t", vec![ChatMessage::user("a"), ChatMessage::user("b")]);
        assert_ne!(split.digest(), joined.digest());
    }
}
