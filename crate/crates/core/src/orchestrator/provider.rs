//! Vendor-neutral chat-completion client.
//!
//! The wire shape is the common denominator of hosted chat APIs: POST a JSON
//! body of `model`, `temperature` and `messages` (role/content pairs) to a
//! configurable path, read `choices[0].message.content` back. Base URL, path,
//! model name and the auth environment variable are all configuration.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::OrchestratorError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into() }
    }
}

#[derive(Clone, Debug)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Clone, Debug)]
pub struct ChatResponse {
    pub content: String,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    /// Worth retrying: 429, 5xx, timeouts, connection drops.
    #[error("transient provider failure: {reason}")]
    Transient { reason: String },
    /// The provider answered but declined to produce content.
    #[error("provider refused: {reason}")]
    Refusal { reason: String },
    /// Not worth retrying as-is (auth, malformed request, bad response).
    #[error("provider failure: {reason}")]
    Fatal { reason: String },
}

#[allow(async_fn_in_trait)]
pub trait ChatProvider {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError>;
}

/// Connection settings for the chat-completion service.
#[derive(Clone, Debug)]
pub struct ProviderConfig {
    pub base_url: String,
    pub path: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token, if any.
    pub auth_env: Option<String>,
    pub temperature_translate: f64,
    pub temperature_judge: f64,
}

impl ProviderConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            path: "/v1/chat/completions".into(),
            model: model.into(),
            auth_env: None,
            temperature_translate: 0.3,
            temperature_judge: 0.0,
        }
    }

    pub fn url(&self) -> String {
        format!("{}{}", self.base_url.trim_end_matches('/'), self.path)
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
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

pub struct HttpChatProvider {
    client: reqwest::Client,
    url: String,
    model: String,
    token: Option<String>,
}

impl HttpChatProvider {
    pub fn new(cfg: &ProviderConfig, timeout: Duration) -> Result<Self, OrchestratorError> {
        let token = match &cfg.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| OrchestratorError::Config {
                reason: format!("auth environment variable `{var}` is not set"),
            })?),
            None => None,
        };
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| OrchestratorError::Config { reason: e.to_string() })?;
        Ok(Self { client, url: cfg.url(), model: cfg.model.clone(), token })
    }
}

impl ChatProvider for HttpChatProvider {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let body = WireRequest {
            model: &self.model,
            temperature: request.temperature,
            messages: &request.messages,
        };
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().await.map_err(|e| {
            // reqwest folds timeouts and connection failures together here.
            ProviderError::Transient { reason: e.to_string() }
        })?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(ProviderError::Transient { reason: format!("status {status}") });
        }
        if !status.is_success() {
            let text = resp.text().await.unwrap_or_default();
            return Err(ProviderError::Fatal { reason: format!("status {status}: {text}") });
        }
        let wire: WireResponse = resp
            .json()
            .await
            .map_err(|e| ProviderError::Fatal { reason: format!("bad response body: {e}") })?;
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or(ProviderError::Fatal { reason: "response carried no choices".into() })?;
        if matches!(choice.finish_reason.as_deref(), Some("content_filter" | "refusal")) {
            return Err(ProviderError::Refusal {
                reason: choice.finish_reason.unwrap_or_default(),
            });
        }
        match choice.message.content {
            Some(content) if !content.is_empty() => Ok(ChatResponse { content }),
            _ => Err(ProviderError::Refusal { reason: "empty completion".into() }),
        }
    }
}
