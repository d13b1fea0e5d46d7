use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AgentError, AgentRole, MockBackend};

pub const ENV_API_KEY: &str = "PHISHGUARD_API_KEY";
pub const ENV_BASE_URL: &str = "PHISHGUARD_BASE_URL";
pub const ENV_MODEL: &str = "PHISHGUARD_MODEL";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// One chat completion call. `agent` is local metadata and is not sent.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub agent: AgentRole,
    pub messages: Vec<ChatMessage>,
    /// Ask for a JSON object reply where the backend supports it.
    pub json_mode: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl BackendError {
    /// Client errors other than 408 and 429 will not heal on retry.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Status { status, .. } => {
                !(400..500).contains(status) || *status == 408 || *status == 429
            }
            _ => true,
        }
    }
}

/// A chat-completions endpoint. Implementations must be shareable across
/// threads.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;

    fn config(&self) -> &ChatBackendConfig;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendKind {
    RemoteHttp,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatBackendConfig {
    pub kind: BackendKind,
    pub base_url: Option<String>,
    pub model_name: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// Requests per second across all threads; 0 disables the limit.
    pub rate_limit: f64,
    /// First retry delay; later retries double it.
    pub backoff_base_ms: u64,
    pub temperature: f64,
}

impl ChatBackendConfig {
    pub fn mock() -> Self {
        Self {
            kind: BackendKind::Mock,
            base_url: None,
            model_name: "mock".into(),
            timeout_ms: 60_000,
            max_retries: 3,
            rate_limit: 0.0,
            backoff_base_ms: 500,
            temperature: 0.0,
        }
    }

    pub fn remote(base_url: &str, model_name: &str) -> Self {
        Self {
            kind: BackendKind::RemoteHttp,
            base_url: Some(base_url.to_string()),
            model_name: model_name.to_string(),
            ..Self::mock()
        }
    }

    /// Remote settings from `PHISHGUARD_BASE_URL` and `PHISHGUARD_MODEL`.
    pub fn from_env() -> Result<Self, AgentError> {
        let base = std::env::var(ENV_BASE_URL)
            .map_err(|_| AgentError::InvalidConfig(format!("{ENV_BASE_URL} is not set")))?;
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "gpt-4o".into());
        Ok(Self::remote(&base, &model))
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.kind == BackendKind::RemoteHttp
            && self.base_url.as_deref().is_none_or(|u| u.trim().is_empty())
        {
            return Err(AgentError::InvalidConfig("a remote backend needs base_url".into()));
        }
        if !(self.rate_limit >= 0.0 && self.rate_limit.is_finite()) {
            return Err(AgentError::InvalidConfig("rate_limit must be finite and >= 0".into()));
        }
        Ok(())
    }
}

pub fn build_backend(config: &ChatBackendConfig) -> Result<Arc<dyn ChatBackend>, AgentError> {
    config.validate()?;
    Ok(match config.kind {
        BackendKind::Mock => Arc::new(MockBackend::with_config(config.clone())),
        BackendKind::RemoteHttp => Arc::new(HttpBackend::new(
            config.clone(),
            std::env::var(ENV_API_KEY).ok(),
        )?),
    })
}

/// Spaces calls at least `1 / rate` seconds apart across all holders.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Option<Duration>,
    next_slot: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(requests_per_second: f64) -> Self {
        let interval = (requests_per_second > 0.0)
            .then(|| Duration::from_secs_f64(1.0 / requests_per_second));
        Self {
            interval,
            next_slot: Mutex::new(Instant::now()),
        }
    }

    pub fn acquire(&self) {
        let Some(interval) = self.interval else {
            return;
        };
        let wait = {
            let mut next = self.next_slot.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + interval;
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// OpenAI-compatible `POST {base_url}/chat/completions` client.
pub struct HttpBackend {
    config: ChatBackendConfig,
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    limiter: RateLimiter,
}

impl HttpBackend {
    pub fn new(config: ChatBackendConfig, api_key: Option<String>) -> Result<Self, AgentError> {
        config.validate()?;
        let base = config.base_url.clone().unwrap_or_default();
        let endpoint = format!("{}/chat/completions", base.trim_end_matches('/'));
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            limiter: RateLimiter::new(config.rate_limit),
            config,
            endpoint,
            api_key,
            agent,
        })
    }

    pub fn request_body(&self, request: &ChatRequest) -> Value {
        let mut body = serde_json::json!({
            "model": self.config.model_name,
            "messages": request.messages,
            "temperature": self.config.temperature,
        });
        if request.json_mode {
            body["response_format"] = serde_json::json!({"type": "json_object"});
        }
        body
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.limiter.acquire();
        let mut call = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(self.request_body(request))
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Status { status, body: text });
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Malformed("no choices[0].message.content".into()))
    }

    fn config(&self) -> &ChatBackendConfig {
        &self.config
    }
}
