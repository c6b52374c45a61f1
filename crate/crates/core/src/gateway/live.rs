//! OpenAI-compatible chat-completion backend.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{CallKey, ChatBackend, ChatRequest, GatewayError};

pub const URL_ENV: &str = "DYNAMICARE_LLM_URL";
pub const KEY_ENV: &str = "DYNAMICARE_LLM_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    /// Base URL (`.../v1`) or the full `/chat/completions` endpoint.
    pub url: String,
    pub api_key: String,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
    /// Token-bucket rate limit; `None` disables limiting.
    pub requests_per_minute: Option<u32>,
}

impl LiveConfig {
    pub fn new(url: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            api_key: api_key.into(),
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
            requests_per_minute: None,
        }
    }

    pub fn from_env() -> Result<Self, GatewayError> {
        let url = std::env::var(URL_ENV).map_err(|_| GatewayError::Config(format!("{URL_ENV} is not set")))?;
        let key = std::env::var(KEY_ENV).map_err(|_| GatewayError::Config(format!("{KEY_ENV} is not set")))?;
        Ok(Self::new(url, key))
    }

    fn endpoint(&self) -> String {
        let base = self.url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

/// Token bucket refilled continuously at `per_minute / 60` tokens per second.
#[derive(Debug)]
pub struct RateLimiter {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        let capacity = f64::from(requests.max(1));
        Self { capacity, per_second: capacity / 60.0, state: Mutex::new((capacity, Instant::now())) }
    }

    /// Blocks until a token is available.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("rate limiter lock poisoned");
                let now = Instant::now();
                let (tokens, last) = *state;
                let tokens = (tokens + now.duration_since(last).as_secs_f64() * self.per_second).min(self.capacity);
                if tokens >= 1.0 {
                    *state = (tokens - 1.0, now);
                    return;
                }
                *state = (tokens, now);
                Duration::from_secs_f64((1.0 - tokens) / self.per_second)
            };
            thread::sleep(wait);
        }
    }
}

/// Append-only JSONL log of live request/response pairs.
#[derive(Debug)]
pub struct AuditLog {
    file: Mutex<File>,
}

impl AuditLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file: Mutex::new(file) })
    }

    fn append(&self, entry: &serde_json::Value) -> std::io::Result<()> {
        let mut file = self.file.lock().expect("audit log lock poisoned");
        writeln!(file, "{entry}")?;
        file.flush()?;
        file.sync_data()
    }
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

pub struct LiveBackend {
    config: LiveConfig,
    agent: ureq::Agent,
    limiter: Option<RateLimiter>,
    audit: Option<AuditLog>,
}

impl std::fmt::Debug for LiveBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveBackend").field("url", &self.config.url).finish_non_exhaustive()
    }
}

enum Failure {
    Retryable(String),
    Fatal(GatewayError),
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        let limiter = config.requests_per_minute.map(RateLimiter::per_minute);
        Self { config, agent, limiter, audit: None }
    }

    pub fn with_audit_log(mut self, audit: AuditLog) -> Self {
        self.audit = Some(audit);
        self
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<String, Failure> {
        if let Some(limiter) = &self.limiter {
            limiter.acquire();
        }
        let mut response = self
            .agent
            .post(&self.config.endpoint())
            .header("Authorization", &format!("Bearer {}", self.config.api_key))
            .send_json(body)
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = response.status().as_u16();
        let text =
            response.body_mut().read_to_string().map_err(|e| Failure::Retryable(format!("reading body: {e}")))?;
        match status {
            200..=299 => {
                let parsed: CompletionResponse = serde_json::from_str(&text)
                    .map_err(|e| Failure::Fatal(GatewayError::MalformedResponse(e.to_string())))?;
                parsed
                    .choices
                    .into_iter()
                    .next()
                    .and_then(|c| c.message.content)
                    .ok_or_else(|| Failure::Fatal(GatewayError::MalformedResponse("no message content".into())))
            }
            401 | 403 => Err(Failure::Fatal(GatewayError::Authentication { status, body: text })),
            408 | 429 | 500..=599 => Err(Failure::Retryable(format!("HTTP {status}: {text}"))),
            _ => Err(Failure::Fatal(GatewayError::Rejected { status, body: text })),
        }
    }
}

impl ChatBackend for LiveBackend {
    fn complete(&self, key: &CallKey, request: &ChatRequest) -> Result<String, GatewayError> {
        let body = json!({
            "model": request.model_name,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_context},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let attempts = self.config.max_attempts.max(1);
        let mut last = String::new();
        for i in 0..attempts {
            if i > 0 {
                thread::sleep(self.config.initial_backoff * 2u32.pow(i - 1));
            }
            match self.attempt(&body) {
                Ok(reply) => {
                    if let Some(audit) = &self.audit {
                        audit.append(&json!({"key": key, "request": body, "reply": reply}))?;
                    }
                    return Ok(reply);
                }
                Err(Failure::Fatal(e)) => {
                    if let Some(audit) = &self.audit {
                        audit.append(&json!({"key": key, "request": body, "error": e.to_string()}))?;
                    }
                    return Err(e);
                }
                Err(Failure::Retryable(msg)) => {
                    tracing::warn!(attempt = i + 1, "transient backend failure: {msg}");
                    last = msg;
                }
            }
        }
        if let Some(audit) = &self.audit {
            audit.append(&json!({"key": key, "request": body, "error": last}))?;
        }
        Err(GatewayError::Exhausted { attempts, last })
    }
}
