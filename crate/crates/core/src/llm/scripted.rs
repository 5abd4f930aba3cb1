use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{truncate_at_stop, ChatBackend, ChatRequest, ChatResponse, FinishReason, LlmError};

/// One canned reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reply {
    Text(String),
    /// Echo the text following the last `marker` in the final message, up to
    /// the end of that line.
    EchoAfter(String),
    /// Fail with a retry-safe `BackendUnavailable`.
    Unavailable(String),
}

impl Reply {
    pub fn text(s: impl Into<String>) -> Self {
        Self::Text(s.into())
    }

    fn produce(&self, request: &ChatRequest) -> Result<String, LlmError> {
        match self {
            Reply::Text(text) => Ok(text.clone()),
            Reply::EchoAfter(marker) => {
                let last = request.last_content();
                let tail = match last.rfind(marker.as_str()) {
                    Some(pos) => &last[pos + marker.len()..],
                    None => last,
                };
                Ok(tail.lines().next().unwrap_or("").trim().to_string())
            }
            Reply::Unavailable(message) => Err(LlmError::unavailable(message.clone(), true)),
        }
    }
}

/// A matcher-table entry. All predicates must hold for the rule to fire.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    /// Substrings required in the system message.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub system_contains: Vec<String>,
    /// Substrings required in the final message.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    /// Substrings that must be absent from the final message.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub not_contains: Vec<String>,
    pub reply: Reply,
}

impl Rule {
    pub fn new(reply: Reply) -> Self {
        Self {
            reply,
            ..Self::default()
        }
    }

    pub fn system(mut self, needle: impl Into<String>) -> Self {
        self.system_contains.push(needle.into());
        self
    }

    pub fn contains(mut self, needle: impl Into<String>) -> Self {
        self.contains.push(needle.into());
        self
    }

    pub fn not_contains(mut self, needle: impl Into<String>) -> Self {
        self.not_contains.push(needle.into());
        self
    }

    fn matches(&self, request: &ChatRequest) -> bool {
        let system = request.system_content();
        let last = request.last_content();
        self.system_contains.iter().all(|n| system.contains(n.as_str()))
            && self.contains.iter().all(|n| last.contains(n.as_str()))
            && !self.not_contains.iter().any(|n| last.contains(n.as_str()))
    }
}

impl Default for Reply {
    fn default() -> Self {
        Reply::Text(String::new())
    }
}

/// Script file contents: either a plain queue consumed in order, or a
/// first-match rule table that answers as a pure function of the request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Script {
    Queue { responses: Vec<Reply> },
    Matcher { rules: Vec<Rule> },
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("cannot read script {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed script: {0}")]
    Parse(#[from] serde_json::Error),
}

impl Script {
    pub fn from_json_str(text: &str) -> Result<Self, ScriptError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("script serializes")
    }
}

enum Mode {
    Queue(Mutex<VecDeque<Reply>>),
    Matcher(Vec<Rule>),
}

/// Deterministic test double. Queue mode is guarded by a mutex so concurrent
/// callers each take a distinct item; matcher mode holds no mutable state.
pub struct ScriptedBackend {
    mode: Mode,
    call_log: Mutex<Vec<ChatRequest>>,
    latency: Duration,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        let mode = match script {
            Script::Queue { responses } => Mode::Queue(Mutex::new(responses.into())),
            Script::Matcher { rules } => Mode::Matcher(rules),
        };
        Self {
            mode,
            call_log: Mutex::new(Vec::new()),
            latency: Duration::ZERO,
        }
    }

    pub fn queue<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(Script::Queue {
            responses: texts.into_iter().map(|t| Reply::Text(t.into())).collect(),
        })
    }

    pub fn matcher(rules: Vec<Rule>) -> Self {
        Self::new(Script::Matcher { rules })
    }

    /// Sleeps before every reply; lets tests hold a request in flight.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn call_log(&self) -> Vec<ChatRequest> {
        self.call_log.lock().expect("call log poisoned").clone()
    }

    pub fn calls(&self) -> usize {
        self.call_log.lock().expect("call log poisoned").len()
    }

    pub fn remaining(&self) -> Option<usize> {
        match &self.mode {
            Mode::Queue(q) => Some(q.lock().expect("queue poisoned").len()),
            Mode::Matcher(_) => None,
        }
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        if !self.latency.is_zero() {
            thread::sleep(self.latency);
        }
        let reply = match &self.mode {
            Mode::Queue(queue) => queue
                .lock()
                .expect("queue poisoned")
                .pop_front()
                .ok_or_else(|| LlmError::ScriptExhausted("queue is empty".into()))?,
            Mode::Matcher(rules) => rules
                .iter()
                .find(|r| r.matches(request))
                .map(|r| r.reply.clone())
                .ok_or_else(|| {
                    let preview: String = request.last_content().chars().take(120).collect();
                    LlmError::ScriptExhausted(format!("no rule matches request: {preview:?}"))
                })?,
        };
        self.call_log
            .lock()
            .expect("call log poisoned")
            .push(request.clone());
        let content = reply.produce(request)?;
        Ok(match truncate_at_stop(&content, &request.stop_sequences) {
            Some(cut) => ChatResponse {
                content: cut,
                finish_reason: FinishReason::StopSequence,
                usage: None,
            },
            None => ChatResponse::stop(content),
        })
    }

    fn name(&self) -> &str {
        "scripted"
    }
}
