//! JSON-over-HTTP chat-completion client.
//!
//! The rendered prompt bundle becomes the system message; caller turns are
//! sent as `assistant` messages and call-taker turns as `user` messages.
//! The credential is read from the environment variable named in the config
//! at request time and is never stored.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::backend::{BackendClient, CompletionRequest};
use super::GenerationError;
use crate::corpus::Speaker;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteBackendConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Keep at most this many history turns (most recent); `None` sends all.
    #[serde(default)]
    pub history_cap: Option<usize>,
}

fn default_timeout_ms() -> u64 {
    30_000
}

pub struct ChatCompletionClient {
    config: RemoteBackendConfig,
    agent: ureq::Agent,
}

impl ChatCompletionClient {
    pub fn new(config: RemoteBackendConfig) -> Self {
        let agent =
            ureq::Agent::config_builder().timeout_global(Some(Duration::from_millis(config.timeout_ms))).build().into();
        Self { config, agent }
    }

    pub fn request_body(&self, r: &CompletionRequest<'_>) -> Value {
        let mut messages = vec![json!({"role": "system", "content": r.bundle.render()})];
        let start = match self.config.history_cap {
            Some(cap) => r.history.len().saturating_sub(cap),
            None => 0,
        };
        for t in &r.history[start..] {
            let role = match t.speaker {
                Speaker::Caller => "assistant",
                Speaker::Calltaker => "user",
            };
            messages.push(json!({"role": role, "content": t.text}));
        }
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": r.profile.temperature,
            "max_tokens": r.profile.max_length,
            "seed": r.seed,
        })
    }
}

impl BackendClient for ChatCompletionClient {
    fn complete(&self, r: &CompletionRequest<'_>) -> Result<String, GenerationError> {
        let body = self.request_body(r);
        let mut req = self.agent.post(&self.config.endpoint).header("Content-Type", "application/json");
        if let Some(var) = &self.config.api_key_env {
            let key = std::env::var(var)
                .map_err(|_| GenerationError::Transport(format!("environment variable {var} is not set")))?;
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| GenerationError::Transport(e.to_string()))?;
        let value: Value =
            resp.body_mut().read_json().map_err(|e| GenerationError::Transport(format!("unreadable response: {e}")))?;
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| GenerationError::Transport("response has no choices[0].message.content".into()))?;
        Ok(text.trim().to_string())
    }
}
