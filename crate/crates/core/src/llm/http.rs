use std::time::Duration;

use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{
    truncate_at_stop, ChatBackend, ChatMessage, ChatRequest, ChatResponse, FinishReason, LlmError,
    Usage,
};

pub const API_KEY_ENV: &str = "PROACTIVA_API_KEY";
pub const API_BASE_ENV: &str = "PROACTIVA_API_BASE";
pub const MODEL_ENV: &str = "PROACTIVA_MODEL";

const DEFAULT_BASE: &str = "https://api.openai.com/v1";
const DEFAULT_MODEL: &str = "gpt-3.5-turbo";

#[derive(Clone)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
}

impl std::fmt::Debug for HttpBackendConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackendConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("model", &self.model)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl HttpBackendConfig {
    pub fn from_env() -> Self {
        Self {
            base_url: std::env::var(API_BASE_ENV).unwrap_or_else(|_| DEFAULT_BASE.to_string()),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            model: std::env::var(MODEL_ENV).unwrap_or_else(|_| DEFAULT_MODEL.to_string()),
            timeout: Duration::from_secs(60),
        }
    }
}

/// OpenAI-compatible `POST {base}/chat/completions` client.
pub struct HttpBackend {
    config: HttpBackendConfig,
    agent: Agent,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    stop: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u32,
    completion_tokens: u32,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn from_env() -> Self {
        Self::new(HttpBackendConfig::from_env())
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        // Most endpoints reject more than four stop strings.
        let stops = &request.stop_sequences[..request.stop_sequences.len().min(4)];
        let body = WireRequest {
            model: &self.config.model,
            messages: &request.messages,
            temperature: request.temperature,
            stop: stops,
            max_tokens: request.max_output_tokens,
        };
        let mut call = self.agent.post(&self.endpoint());
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(&body)
            .map_err(|e| LlmError::unavailable(format!("request failed: {e}"), true))?;

        let status = response.status().as_u16();
        if status == 401 || status == 403 {
            return Err(LlmError::unavailable(format!("authorization rejected ({status})"), false));
        }
        if status == 429 || status >= 500 {
            return Err(LlmError::unavailable(format!("server returned {status}"), true));
        }
        if !(200..300).contains(&status) {
            return Err(LlmError::MalformedResponse(format!("unexpected status {status}")));
        }

        let wire: WireResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| LlmError::MalformedResponse("no choices".into()))?;
        let content = choice
            .message
            .content
            .ok_or_else(|| LlmError::MalformedResponse("choice has no content".into()))?;
        let mut finish_reason = match choice.finish_reason.as_deref() {
            Some("length") => FinishReason::Length,
            _ => FinishReason::Stop,
        };
        // Servers do not always honor `stop`; never pass text beyond it.
        let content = match truncate_at_stop(&content, &request.stop_sequences) {
            Some(cut) => {
                finish_reason = FinishReason::StopSequence;
                cut
            }
            None => content,
        };
        Ok(ChatResponse {
            content,
            finish_reason,
            usage: wire.usage.map(|u| Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            }),
        })
    }

    fn name(&self) -> &str {
        "http"
    }
}
