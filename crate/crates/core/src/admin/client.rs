//! OpenAI-compatible chat-completions client with retries and rate limiting.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_k: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    /// Response fields other than the content (id, model, usage, finish reason).
    pub metadata: Value,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChatError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("endpoint configuration error: {0}")]
    Config(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl ChatError {
    /// Authentication and configuration errors abort a session.
    pub fn is_fatal(&self) -> bool {
        matches!(self, Self::Auth(_) | Self::Config(_))
    }

    pub fn is_retryable(&self) -> bool {
        match self {
            Self::Transport(_) | Self::Malformed(_) => true,
            Self::Status { status, .. } => *status == 429 || *status >= 500,
            Self::Auth(_) | Self::Config(_) => false,
        }
    }
}

/// A chat-completions endpoint.
pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError>;

    /// Whether the endpoint accepts a `top_k` sampling parameter.
    fn accepts_top_k(&self) -> bool {
        false
    }

    /// Model identifier and base URL, for manifests.
    fn describe(&self) -> String {
        "chat endpoint".into()
    }
}

/// Endpoint settings; the API key is read from the named environment
/// variable at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub accepts_top_k: bool,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

pub struct HttpChatClient {
    config: EndpointConfig,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(config: EndpointConfig) -> Result<Self, ChatError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| ChatError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ChatError::Config(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            http,
        })
    }

    fn url(&self) -> String {
        let base = self.config.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        let mut req = self.http.post(self.url()).json(request);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ChatError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| ChatError::Transport(e.to_string()))?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(ChatError::Auth(body)),
            400 | 404 | 422 => return Err(ChatError::Config(format!("HTTP {status}: {body}"))),
            _ => return Err(ChatError::Status { status, body }),
        }
        parse_completion(&body)
    }

    fn accepts_top_k(&self) -> bool {
        self.config.accepts_top_k
    }

    fn describe(&self) -> String {
        self.config.base_url.clone()
    }
}

/// Pulls `choices[0].message.content` out of a completion body.
pub fn parse_completion(body: &str) -> Result<ChatResponse, ChatError> {
    let mut v: Value = serde_json::from_str(body).map_err(|e| ChatError::Malformed(e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ChatError::Malformed("missing choices[0].message.content".into()))?
        .to_string();
    let finish = v
        .pointer("/choices/0/finish_reason")
        .cloned()
        .unwrap_or(Value::Null);
    if let Some(obj) = v.as_object_mut() {
        obj.remove("choices");
        obj.insert("finish_reason".into(), finish);
    }
    Ok(ChatResponse { content, metadata: v })
}

/// Builds the JSON body of a completion, for mock servers and tests.
pub fn completion_body(content: &str) -> String {
    json!({
        "id": "cmpl-mock",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]
    })
    .to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Full-jitter exponential backoff before attempt `attempt + 1`.
    pub fn delay(&self, attempt: u32) -> Duration {
        let cap = self
            .base_delay_ms
            .saturating_mul(1u64 << attempt.min(30))
            .min(self.max_delay_ms);
        if cap == 0 {
            return Duration::ZERO;
        }
        Duration::from_millis(rand::thread_rng().gen_range(0..=cap))
    }
}

/// Enforces a minimum interval between request starts.
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn per_second(rate: f64) -> Self {
        Self {
            interval: Duration::from_secs_f64(1.0 / rate.max(1e-9)),
            next: Mutex::new(Instant::now()),
        }
    }

    pub fn wait(&self) {
        let slot = {
            let mut next = self.next.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

/// Sends a request, retrying retryable failures under `policy`. Returns the
/// response or the last error, with the number of attempts made.
pub fn complete_with_retries(
    client: &dyn ChatClient,
    request: &ChatRequest,
    policy: &RetryPolicy,
    limiter: Option<&RateLimiter>,
) -> (Result<ChatResponse, ChatError>, u32) {
    let mut attempt = 0;
    loop {
        if let Some(l) = limiter {
            l.wait();
        }
        attempt += 1;
        match client.complete(request) {
            Ok(r) => return (Ok(r), attempt),
            Err(e) if e.is_retryable() && attempt < policy.max_attempts.max(1) => {
                log::warn!("attempt {attempt} failed: {e}; retrying");
                std::thread::sleep(policy.delay(attempt - 1));
            }
            Err(e) => return (Err(e), attempt),
        }
    }
}
