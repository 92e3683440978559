//! External-service boundaries.
//!
//! Every network-facing role (problem generator, renderer, judge, student,
//! embedding service) sits behind one small trait with a deterministic
//! offline substitute, so the rest of the system runs and tests without
//! credentials or connectivity.
//!
//! Wire contract for chat completions: HTTP POST of a JSON body
//! `{"model": .., "temperature": 0, "messages": [{"role", "content"}, ..]}`;
//! the response carries the reply under `"content"` (or the conventional
//! `"choices[0].message.content"`). Requests are idempotent and retried
//! with exponential backoff. Endpoint and credentials come from
//! `PROBGEN_LLM_ENDPOINT`, `PROBGEN_LLM_MODEL`, and `PROBGEN_LLM_API_KEY`.

mod embed;
mod judge;
mod student;

pub use embed::{cosine_distance, embed_or_fallback, Embedder, LexicalEmbedder};
pub use judge::{judge, llm_judge, DifficultyVariant, JudgeContext, JudgeVerdict, Representation};
pub use student::{
    student_answer, Capability, FailureTag, Student, StudentError, StudentOutcome, StudentProfile,
};

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;
use thiserror::Error;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
}

impl ChatRequest {
    pub fn new(model: &str) -> Self {
        ChatRequest {
            model: model.to_string(),
            temperature: 0.0,
            messages: Vec::new(),
        }
    }

    pub fn system(mut self, content: &str) -> Self {
        self.messages.push(ChatMessage {
            role: "system".into(),
            content: content.into(),
        });
        self
    }

    pub fn user(mut self, content: &str) -> Self {
        self.messages.push(ChatMessage {
            role: "user".into(),
            content: content.into(),
        });
        self
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ChatResponse {
    pub content: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { message: String, attempts: u32 },
    #[error("http status {status} after {attempts} attempts")]
    Http { status: u16, attempts: u32 },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("mock transcript exhausted")]
    Exhausted,
}

pub trait ChatClient: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError>;
}

/// Retry with exponential backoff; delays double from `base_delay_ms`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 250,
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1u64 << attempt.min(16)))
    }
}

fn retryable_status(status: u16) -> bool {
    matches!(status, 408 | 429 | 500 | 502 | 503 | 504)
}

// ---------------------------------------------------------------------------
// HTTP path

/// Low-level POST, injectable for tests.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        api_key: Option<&str>,
        body: &str,
        timeout: Duration,
    ) -> Result<(u16, String), String>;
}

/// Production transport over ureq.
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        api_key: Option<&str>,
        body: &str,
        timeout: Duration,
    ) -> Result<(u16, String), String> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        let mut request = agent.post(url).header("content-type", "application/json");
        if let Some(key) = api_key {
            request = request.header("authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send(body).map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        Ok((status, text))
    }
}

#[derive(Clone, Debug)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_concurrent: usize,
    pub retry: RetryPolicy,
}

impl HttpConfig {
    /// Reads endpoint/model/credentials from the environment.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var("PROBGEN_LLM_ENDPOINT").ok()?;
        let model = std::env::var("PROBGEN_LLM_MODEL").unwrap_or_else(|_| "default".into());
        Some(HttpConfig {
            endpoint,
            model,
            api_key: std::env::var("PROBGEN_LLM_API_KEY").ok(),
            timeout: Duration::from_secs(60),
            max_concurrent: 4,
            retry: RetryPolicy::default(),
        })
    }
}

/// Chat client speaking the wire contract over a [`Transport`].
pub struct HttpChatClient<T: Transport> {
    config: HttpConfig,
    transport: T,
    in_flight: Mutex<usize>,
    gate: std::sync::Condvar,
}

impl<T: Transport> HttpChatClient<T> {
    pub fn new(config: HttpConfig, transport: T) -> Self {
        HttpChatClient {
            config,
            transport,
            in_flight: Mutex::new(0),
            gate: std::sync::Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut count = self.in_flight.lock().unwrap();
        while *count >= self.config.max_concurrent {
            count = self.gate.wait(count).unwrap();
        }
        *count += 1;
    }

    fn release(&self) {
        let mut count = self.in_flight.lock().unwrap();
        *count -= 1;
        self.gate.notify_one();
    }
}

fn parse_reply(text: &str) -> Result<String, ClientError> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| ClientError::Protocol(format!("bad response json: {e}")))?;
    if let Some(content) = value.get("content").and_then(|v| v.as_str()) {
        return Ok(content.to_string());
    }
    if let Some(content) = value
        .pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
    {
        return Ok(content.to_string());
    }
    Err(ClientError::Protocol(
        "response carries no content field".into(),
    ))
}

impl<T: Transport> ChatClient for HttpChatClient<T> {
    fn model_id(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let body = serde_json::to_string(request)
            .map_err(|e| ClientError::Protocol(format!("bad request json: {e}")))?;
        self.acquire();
        let result = (|| {
            let mut last_error = ClientError::Transport {
                message: "no attempt made".into(),
                attempts: 0,
            };
            for attempt in 0..self.config.retry.max_attempts {
                if attempt > 0 {
                    std::thread::sleep(self.config.retry.delay(attempt - 1));
                }
                match self.transport.post_json(
                    &self.config.endpoint,
                    self.config.api_key.as_deref(),
                    &body,
                    self.config.timeout,
                ) {
                    Ok((status, text)) if (200..300).contains(&status) => {
                        return parse_reply(&text).map(|content| ChatResponse { content });
                    }
                    Ok((status, _)) => {
                        last_error = ClientError::Http {
                            status,
                            attempts: attempt + 1,
                        };
                        if !retryable_status(status) {
                            return Err(last_error);
                        }
                    }
                    Err(message) => {
                        last_error = ClientError::Transport {
                            message,
                            attempts: attempt + 1,
                        };
                    }
                }
            }
            Err(last_error)
        })();
        self.release();
        result
    }
}

// ---------------------------------------------------------------------------
// offline path

/// Scripted client: hands out queued replies in order and records a
/// transcript. The queue empty means `Exhausted`, unless a default reply
/// is set.
pub struct MockChatClient {
    model: String,
    replies: Mutex<VecDeque<String>>,
    default_reply: Option<String>,
    transcript: Mutex<Vec<TranscriptEntry>>,
}

impl MockChatClient {
    pub fn new(replies: impl IntoIterator<Item = String>) -> Self {
        MockChatClient {
            model: "mock".into(),
            replies: Mutex::new(replies.into_iter().collect()),
            default_reply: None,
            transcript: Mutex::new(Vec::new()),
        }
    }

    pub fn with_default(reply: &str) -> Self {
        MockChatClient {
            model: "mock".into(),
            replies: Mutex::new(VecDeque::new()),
            default_reply: Some(reply.to_string()),
            transcript: Mutex::new(Vec::new()),
        }
    }

    pub fn transcript(&self) -> Transcript {
        Transcript {
            entries: self.transcript.lock().unwrap().clone(),
        }
    }
}

impl ChatClient for MockChatClient {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let reply = {
            let mut queue = self.replies.lock().unwrap();
            match queue.pop_front() {
                Some(r) => r,
                None => self
                    .default_reply
                    .clone()
                    .ok_or(ClientError::Exhausted)?,
            }
        };
        self.transcript.lock().unwrap().push(TranscriptEntry {
            request: request.clone(),
            response: reply.clone(),
        });
        Ok(ChatResponse { content: reply })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TranscriptEntry {
    pub request: ChatRequest,
    pub response: String,
}

/// Persistable request/response log for replay tests.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn save(&self, path: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self).unwrap())
    }

    pub fn load(path: &std::path::Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// Replays a recorded transcript in order; requests must match what was
/// recorded.
pub struct ReplayClient {
    model: String,
    remaining: Mutex<VecDeque<TranscriptEntry>>,
}

impl ReplayClient {
    pub fn new(transcript: Transcript) -> Self {
        ReplayClient {
            model: "replay".into(),
            remaining: Mutex::new(transcript.entries.into()),
        }
    }
}

impl ChatClient for ReplayClient {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let mut queue = self.remaining.lock().unwrap();
        let entry = queue.pop_front().ok_or(ClientError::Exhausted)?;
        if entry.request.messages != request.messages {
            return Err(ClientError::Protocol(
                "replay mismatch: request differs from the recorded one".into(),
            ));
        }
        Ok(ChatResponse {
            content: entry.response,
        })
    }
}
