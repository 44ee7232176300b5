//! Minimal chat-completion client.
//!
//! Request: `{"model", "messages": [{"role", "content"}], "temperature"}`.
//! Response: text at `choices[0].message.content`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    Protocol(String),
    #[error("api key variable `{0}` is not set")]
    MissingKey(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// Anything that turns a message list into a completion.
pub trait ChatClient: Send + Sync {
    fn chat(&self, messages: &[ChatMessage]) -> Result<String, LlmError>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
    pub temperature: f64,
    /// Name of the environment variable holding the bearer token, if any.
    pub api_key_env: Option<String>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            model: "meta-llama/Meta-Llama-3-8B-Instruct".into(),
            timeout_secs: 30,
            temperature: 0.2,
            api_key_env: None,
        }
    }
}

pub fn request_body(model: &str, temperature: f64, messages: &[ChatMessage]) -> Value {
    json!({
        "model": model,
        "messages": messages,
        "temperature": temperature,
    })
}

pub fn extract_content(response: &Value) -> Result<String, LlmError> {
    response
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| LlmError::Protocol("missing choices[0].message.content".into()))
}

/// Blocking HTTP(S) client for an OpenAI-style chat-completion endpoint.
pub struct HttpChatClient {
    agent: ureq::Agent,
    config: LlmConfig,
    api_key: Option<String>,
}

impl HttpChatClient {
    /// Reads the API key from the configured environment variable.
    pub fn from_config(config: LlmConfig) -> Result<Self, LlmError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| LlmError::MissingKey(var.clone()))?),
            None => None,
        };
        Ok(Self::with_key(config, api_key))
    }

    pub fn with_key(config: LlmConfig, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(true)
            .build()
            .into();
        HttpChatClient {
            agent,
            config,
            api_key,
        }
    }
}

impl ChatClient for HttpChatClient {
    fn chat(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let body = request_body(&self.config.model, self.config.temperature, messages);
        let mut req = self
            .agent
            .post(&self.config.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Protocol(e.to_string()))?;
        extract_content(&value)
    }
}
