//! Deterministic backend that replays canned replies from a JSONL script.
//!
//! Each line is one [`ScriptedExchange`]:
//!
//! ```text
//! {"session":"s1","role":"central_triage","round":0,"reply":{"SUGGEST_SPECIALISTS":["neurologist"]}}
//! {"prompt_hash":"3f1c...","reply":"AGREE"}
//! ```
//!
//! A `reply` that is not a string is serialized compactly. `session` may be
//! `"*"` to match any session; exact session matches win.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{CallKey, ChatBackend, ChatRequest, GatewayError};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptMatch {
    Key {
        session: String,
        role: String,
        round: u32,
        #[serde(default)]
        attempt: u32,
    },
    PromptHash {
        prompt_hash: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedExchange {
    #[serde(flatten)]
    pub matcher: ScriptMatch,
    pub reply: Value,
}

impl ScriptedExchange {
    pub fn keyed(key: &CallKey, reply: impl Into<Value>) -> Self {
        Self {
            matcher: ScriptMatch::Key {
                session: key.session.clone(),
                role: key.role.clone(),
                round: key.round,
                attempt: key.attempt,
            },
            reply: reply.into(),
        }
    }

    fn reply_text(&self) -> String {
        match &self.reply {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct ScriptedBackend {
    by_key: HashMap<CallKey, String>,
    by_hash: HashMap<String, String>,
}

impl ScriptedBackend {
    pub fn new(exchanges: impl IntoIterator<Item = ScriptedExchange>) -> Result<Self, GatewayError> {
        let mut backend = Self::default();
        for (i, ex) in exchanges.into_iter().enumerate() {
            backend.insert(ex).map_err(|e| GatewayError::Script(format!("exchange {}: {e}", i + 1)))?;
        }
        Ok(backend)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, GatewayError> {
        let mut backend = Self::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let ex: ScriptedExchange =
                serde_json::from_str(line).map_err(|e| GatewayError::Script(format!("line {}: {e}", i + 1)))?;
            backend.insert(ex).map_err(|e| GatewayError::Script(format!("line {}: {e}", i + 1)))?;
        }
        Ok(backend)
    }

    pub fn from_path(path: &Path) -> Result<Self, GatewayError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GatewayError::Script(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    fn insert(&mut self, ex: ScriptedExchange) -> Result<(), String> {
        let reply = ex.reply_text();
        match ex.matcher {
            ScriptMatch::Key { session, role, round, attempt } => {
                let key = CallKey { session, role: role.to_lowercase(), round, attempt };
                if self.by_key.insert(key.clone(), reply).is_some() {
                    return Err(format!("duplicate match key {key}"));
                }
            }
            ScriptMatch::PromptHash { prompt_hash } => {
                if self.by_hash.insert(prompt_hash.clone(), reply).is_some() {
                    return Err(format!("duplicate prompt hash {prompt_hash}"));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.by_key.len() + self.by_hash.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, key: &CallKey, request: &ChatRequest) -> Result<String, GatewayError> {
        let lookup = CallKey { role: key.role.to_lowercase(), ..key.clone() };
        if let Some(reply) = self.by_key.get(&lookup) {
            return Ok(reply.clone());
        }
        let wildcard = CallKey { session: "*".into(), ..lookup };
        if let Some(reply) = self.by_key.get(&wildcard) {
            return Ok(reply.clone());
        }
        if let Some(reply) = self.by_hash.get(&request.prompt_hash()) {
            return Ok(reply.clone());
        }
        Err(GatewayError::NoScriptedMatch(key.clone()))
    }
}
