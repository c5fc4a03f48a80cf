//! Blocking client for chat-completion endpoints.

use std::thread;
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::backend::BackendError;
use crate::aspects::PromptPair;

pub const API_KEY_ENV: &str = "GUIDEDREC_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpChatConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    250
}

fn default_timeout_s() -> u64 {
    60
}

impl HttpChatConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: 0.0,
            max_retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            timeout_s: default_timeout_s(),
        }
    }
}

pub struct HttpChatBackend {
    config: HttpChatConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl HttpChatBackend {
    pub fn new(config: HttpChatConfig) -> Result<Self, BackendError> {
        if config.endpoint.trim().is_empty() {
            return Err(BackendError::Config(
                "http_chat requires an endpoint".into(),
            ));
        }
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_s))
            .build();
        Ok(Self {
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            config,
            agent,
        })
    }

    pub fn request_body(&self, prompt: &PromptPair) -> Value {
        json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "temperature": self.config.temperature,
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, BackendError> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body.clone()) {
            Ok(resp) => {
                let value: Value = resp.into_json().map_err(|e| {
                    BackendError::Retryable(format!("unreadable response body: {e}"))
                })?;
                first_completion(&value).ok_or_else(|| {
                    BackendError::Fatal(format!("no completion text in response: {value}"))
                })
            }
            Err(ureq::Error::Status(code @ (401 | 403), _)) => Err(BackendError::Fatal(format!(
                "authentication rejected (HTTP {code})"
            ))),
            Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
                Err(BackendError::Retryable(format!("HTTP {code}")))
            }
            Err(ureq::Error::Status(code, resp)) => Err(BackendError::Fatal(format!(
                "HTTP {code}: {}",
                resp.into_string().unwrap_or_default()
            ))),
            Err(ureq::Error::Transport(t)) => Err(BackendError::Retryable(t.to_string())),
        }
    }

    /// Posts the prompt, retrying transient failures with exponential backoff.
    pub fn complete(&self, prompt: &PromptPair) -> Result<String, BackendError> {
        let body = self.request_body(prompt);
        let mut delay = self.config.backoff_ms;
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Err(BackendError::Retryable(msg)) if attempt < self.config.max_retries => {
                    attempt += 1;
                    warn!(
                        "chat request failed ({msg}); retry {attempt}/{}",
                        self.config.max_retries
                    );
                    thread::sleep(Duration::from_millis(delay));
                    delay = delay.saturating_mul(2);
                }
                other => return other,
            }
        }
    }
}

fn first_completion(value: &Value) -> Option<String> {
    value
        .get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}
