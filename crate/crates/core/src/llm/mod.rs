//! Chat-completion interface shared by every pipeline stage.
//!
//! Pipeline code only sees [`ChatBackend`]. Two implementations live here: a
//! deterministic [`ScriptedBackend`] for offline runs and an OpenAI-compatible
//! [`HttpBackend`] for live models.

mod http;
mod scripted;

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use http::{HttpBackend, HttpBackendConfig, API_BASE_ENV, API_KEY_ENV, MODEL_ENV};
pub use scripted::{Reply, Rule, Script, ScriptError, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
    #[serde(default)]
    pub max_output_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>) -> Self {
        Self {
            messages,
            temperature: 0.0,
            stop_sequences: Vec::new(),
            max_output_tokens: None,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_stop(mut self, stop: impl Into<String>) -> Self {
        self.stop_sequences.push(stop.into());
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.messages.first() {
            None => Err(LlmError::InvalidRequest("request has no messages".into())),
            Some(m) if m.role == Role::Assistant => Err(LlmError::InvalidRequest(
                "first message must be system or user".into(),
            )),
            Some(_) if self.temperature.is_nan() || self.temperature < 0.0 => Err(LlmError::InvalidRequest(
                "temperature must be non-negative".into(),
            )),
            Some(_) => Ok(()),
        }
    }

    pub fn system_content(&self) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }

    pub fn last_content(&self) -> &str {
        self.messages
            .last()
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FinishReason {
    Stop,
    StopSequence,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: FinishReason,
    #[serde(default)]
    pub usage: Option<Usage>,
}

impl ChatResponse {
    pub fn stop(content: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            finish_reason: FinishReason::Stop,
            usage: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("scripted backend exhausted: {0}")]
    ScriptExhausted(String),
    #[error("backend unavailable: {message}")]
    BackendUnavailable { message: String, retry_safe: bool },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl LlmError {
    pub fn unavailable(message: impl Into<String>, retry_safe: bool) -> Self {
        Self::BackendUnavailable {
            message: message.into(),
            retry_safe,
        }
    }
}

/// A chat-completion provider. Implementations must tolerate concurrent callers.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;

    /// Short label recorded in run metadata.
    fn name(&self) -> &str;
}

/// Cuts `content` at the earliest stop sequence, if any occurs.
pub fn truncate_at_stop(content: &str, stops: &[String]) -> Option<String> {
    stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| content.find(s.as_str()))
        .min()
        .map(|cut| content[..cut].to_string())
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl RetryPolicy {
    pub fn new(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay: Duration::from_millis(250),
        }
    }

    pub fn with_base_delay(mut self, delay: Duration) -> Self {
        self.base_delay = delay;
        self
    }
}

/// Retries retry-safe `BackendUnavailable` failures with exponential backoff.
pub fn with_retry(
    backend: &dyn ChatBackend,
    request: &ChatRequest,
    policy: RetryPolicy,
) -> Result<ChatResponse, LlmError> {
    if policy.max_attempts == 0 {
        return Err(LlmError::InvalidRequest("max_attempts must be at least 1".into()));
    }
    let mut attempt = 1;
    loop {
        match backend.complete(request) {
            Err(LlmError::BackendUnavailable {
                message,
                retry_safe: true,
            }) => {
                if attempt >= policy.max_attempts {
                    tracing::warn!(attempt, %message, "giving up on backend");
                    return Err(LlmError::unavailable(
                        format!("{message} (after {attempt} attempts)"),
                        true,
                    ));
                }
                let delay = policy.base_delay.saturating_mul(1 << (attempt - 1).min(16));
                tracing::debug!(attempt, ?delay, "backend unavailable, retrying");
                thread::sleep(delay);
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// A backend that applies [`with_retry`] to every call of the wrapped one.
pub struct Retrying {
    inner: Arc<dyn ChatBackend>,
    policy: RetryPolicy,
}

impl Retrying {
    pub fn new(inner: Arc<dyn ChatBackend>, policy: RetryPolicy) -> Self {
        Self { inner, policy }
    }
}

impl ChatBackend for Retrying {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        with_retry(self.inner.as_ref(), request, self.policy)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}
