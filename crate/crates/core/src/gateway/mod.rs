//! Chat-completion gateway.
//!
//! Every agent prompt goes through a [`Gateway`], which wraps a
//! [`ChatBackend`] (live HTTP or scripted) and, when bound to a session,
//! records each prompt and reply into that session's [`Transcript`].

mod json;
mod live;
mod scripted;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::transcript::{Transcript, TranscriptEvent};

pub use json::extract_json_object;
pub use live::{AuditLog, LiveBackend, LiveConfig, RateLimiter};
pub use scripted::{ScriptMatch, ScriptedBackend, ScriptedExchange};

/// Temperature used for categorical outputs (votes, confidence ratings).
pub const CATEGORICAL_TEMPERATURE: f64 = 0.0;
/// Temperature used for free generation (questions, diagnosis lists).
pub const GENERATIVE_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_context: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub expects_structured: bool,
}

impl ChatRequest {
    pub fn new(system_prompt: impl Into<String>, user_context: impl Into<String>) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            user_context: user_context.into(),
            model_name: "gpt-4.1".into(),
            temperature: GENERATIVE_TEMPERATURE,
            max_output_tokens: 1024,
            expects_structured: false,
        }
    }

    pub fn model(mut self, model: impl Into<String>) -> Self {
        self.model_name = model.into();
        self
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn structured(mut self) -> Self {
        self.expects_structured = true;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.system_prompt.trim().is_empty() || self.user_context.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("prompts must be non-empty".into()));
        }
        Ok(())
    }

    /// SHA-256 over the system prompt and user context, hex encoded.
    pub fn prompt_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.system_prompt.as_bytes());
        h.update(b"\n\n");
        h.update(self.user_context.as_bytes());
        hex::encode(h.finalize())
    }
}

/// Identifies one model call: which session, which agent role, which round,
/// and which attempt (repairs and regenerations bump the attempt).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CallKey {
    pub session: String,
    pub role: String,
    pub round: u32,
    #[serde(default)]
    pub attempt: u32,
}

impl CallKey {
    pub fn new(session: impl Into<String>, role: impl Into<String>, round: u32) -> Self {
        Self { session: session.into(), role: role.into(), round, attempt: 0 }
    }

    pub fn retry(&self) -> Self {
        Self { attempt: self.attempt + 1, ..self.clone() }
    }
}

impl fmt::Display for CallKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, round {}, attempt {})", self.session, self.role, self.round, self.attempt)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("no scripted reply for role '{}' round {} (session {}, attempt {})", .0.role, .0.round, .0.session, .0.attempt)]
    NoScriptedMatch(CallKey),
    #[error("authentication rejected by backend (HTTP {status}): {body}")]
    Authentication { status: u16, body: String },
    #[error("backend rejected request (HTTP {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("backend unavailable after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("protocol violation: {reason}")]
    ProtocolViolation { reason: String, raw: String },
    #[error("script error: {0}")]
    Script(String),
    #[error("missing configuration: {0}")]
    Config(String),
    #[error("audit log: {0}")]
    Audit(#[from] std::io::Error),
}

impl GatewayError {
    /// Raw reply text attached to protocol violations.
    pub fn raw_reply(&self) -> Option<&str> {
        match self {
            Self::ProtocolViolation { raw, .. } => Some(raw),
            _ => None,
        }
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, key: &CallKey, request: &ChatRequest) -> Result<String, GatewayError>;
}

const REPAIR_NOTE: &str = "Your previous reply could not be used";

#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    transcript: Option<Arc<Transcript>>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway").field("recording", &self.transcript.is_some()).finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self { backend, transcript: None }
    }

    /// A gateway sharing this backend that records into `transcript`.
    pub fn recording(&self, transcript: Arc<Transcript>) -> Self {
        Self { backend: Arc::clone(&self.backend), transcript: Some(transcript) }
    }

    pub fn note(&self, event: TranscriptEvent) {
        if let Some(t) = &self.transcript {
            t.push(event);
        }
    }

    pub fn violation(&self, key: &CallKey, message: impl Into<String>, raw: Option<String>) {
        let message = message.into();
        tracing::warn!(session = %key.session, role = %key.role, round = key.round, "{message}");
        self.note(TranscriptEvent::Violation { round: key.round, role: key.role.clone(), message, raw });
    }

    pub fn complete(&self, key: &CallKey, request: &ChatRequest) -> Result<String, GatewayError> {
        request.validate()?;
        self.note(TranscriptEvent::Prompt {
            role: key.role.clone(),
            round: key.round,
            attempt: key.attempt,
            model: request.model_name.clone(),
            temperature: request.temperature,
            system: request.system_prompt.clone(),
            user: request.user_context.clone(),
        });
        let reply = self.backend.complete(key, request)?;
        self.note(TranscriptEvent::Reply {
            role: key.role.clone(),
            round: key.round,
            attempt: key.attempt,
            text: reply.clone(),
        });
        Ok(reply)
    }

    /// Extracts the first JSON object in the reply and checks `required_keys`.
    /// One repair re-prompt is issued on failure.
    pub fn complete_structured(
        &self,
        key: &CallKey,
        request: &ChatRequest,
        required_keys: &[&str],
    ) -> Result<Map<String, Value>, GatewayError> {
        self.complete_validated(key, request, required_keys, |m| Ok(m.clone()))
    }

    /// Like [`Gateway::complete_structured`], additionally running `validate`
    /// over the parsed object; a validation failure also consumes the repair.
    pub fn complete_validated<T>(
        &self,
        key: &CallKey,
        request: &ChatRequest,
        required_keys: &[&str],
        validate: impl Fn(&Map<String, Value>) -> Result<T, String>,
    ) -> Result<T, GatewayError> {
        let check = |reply: &str| -> Result<T, String> {
            let obj = extract_json_object(reply).ok_or("reply contains no JSON object")?;
            let missing: Vec<&str> = required_keys.iter().copied().filter(|k| !obj.contains_key(*k)).collect();
            if !missing.is_empty() {
                return Err(format!("missing required keys: {}", missing.join(", ")));
            }
            validate(&obj)
        };

        let request = ChatRequest { expects_structured: true, ..request.clone() };
        let first = self.complete(key, &request)?;
        let reason = match check(&first) {
            Ok(v) => return Ok(v),
            Err(reason) => reason,
        };
        self.violation(key, format!("unusable structured reply, repairing: {reason}"), Some(first));

        let repair_key = key.retry();
        let repair = ChatRequest {
            user_context: format!(
                "{}\n\n{REPAIR_NOTE} ({reason}). Respond again in the required JSON format only, \
                 including the keys: {}.",
                request.user_context,
                required_keys.join(", ")
            ),
            ..request.clone()
        };
        let second = self.complete(&repair_key, &repair)?;
        check(&second).map_err(|reason| GatewayError::ProtocolViolation { reason, raw: second })
    }

    /// Plain completion whose reply must satisfy `parse`; one repair re-prompt
    /// carrying `format_reminder` is issued on failure.
    pub fn complete_parsed<T>(
        &self,
        key: &CallKey,
        request: &ChatRequest,
        format_reminder: &str,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<T, GatewayError> {
        let first = self.complete(key, request)?;
        if let Some(v) = parse(&first) {
            return Ok(v);
        }
        self.violation(key, "reply not in the required format, repairing", Some(first));
        let repair = ChatRequest {
            user_context: format!("{}\n\n{REPAIR_NOTE}. {format_reminder}", request.user_context),
            ..request.clone()
        };
        let second = self.complete(&key.retry(), &repair)?;
        parse(&second).ok_or_else(|| GatewayError::ProtocolViolation {
            reason: "reply not in the required format after repair".into(),
            raw: second,
        })
    }
}
