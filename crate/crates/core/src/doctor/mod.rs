//! Doctor system: the Central Agent that forms and re-forms the specialist
//! team, and the specialist decision protocols (solo and multi).

mod central;
mod consensus;
mod specialist;

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::gateway::{CallKey, ChatRequest, Gateway, GatewayError, CATEGORICAL_TEMPERATURE, GENERATIVE_TEMPERATURE};
use crate::prompts::PromptSet;

pub use central::{adjust_team, apply_update, triage_specialists};
pub use consensus::{
    evaluation_order, required_agreements, resolve_consensus, ConsensusError, ConsensusOutcome, ConsensusRule,
};
pub(crate) use specialist::solo_diagnose;
pub use specialist::{collect_proposals, parse_rating, parse_vote, rate_confidence, solo_respond, vote, Collected};

/// Hard cap on team size.
pub const MAX_TEAM_SIZE: usize = 5;
/// Maximum number of names kept from a diagnosis list.
pub const MAX_DIAGNOSES: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpecialistIdentity(String);

impl SpecialistIdentity {
    pub fn new(name: &str) -> Option<Self> {
        let name = name.trim().trim_matches(|c| c == '"' || c == '\'').trim();
        (!name.is_empty()).then(|| Self(name.to_string()))
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    /// Case-insensitive identity key, also used in scripted call roles.
    pub fn key(&self) -> String {
        self.0.to_lowercase()
    }
}

impl PartialEq for SpecialistIdentity {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for SpecialistIdentity {}

impl fmt::Display for SpecialistIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TeamError {
    #[error("a team needs at least one specialist")]
    Empty,
    #[error("team of {0} exceeds the maximum of {MAX_TEAM_SIZE}")]
    TooLarge(usize),
    #[error("duplicate specialist '{0}'")]
    Duplicate(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeamState {
    members: Vec<SpecialistIdentity>,
    pub round_formed: u32,
}

impl TeamState {
    pub fn new(members: Vec<SpecialistIdentity>, round_formed: u32) -> Result<Self, TeamError> {
        if members.is_empty() {
            return Err(TeamError::Empty);
        }
        if members.len() > MAX_TEAM_SIZE {
            return Err(TeamError::TooLarge(members.len()));
        }
        for (i, m) in members.iter().enumerate() {
            if members[..i].contains(m) {
                return Err(TeamError::Duplicate(m.name().to_string()));
            }
        }
        Ok(Self { members, round_formed })
    }

    pub fn members(&self) -> &[SpecialistIdentity] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, s: &SpecialistIdentity) -> bool {
        self.members.contains(s)
    }

    pub fn names(&self) -> Vec<String> {
        self.members.iter().map(|m| m.name().to_string()).collect()
    }

    pub fn same_members(&self, other: &TeamState) -> bool {
        self.members == other.members
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfidenceRating {
    VeryUnconfident,
    SomewhatUnconfident,
    Neutral,
    SomewhatConfident,
    VeryConfident,
}

impl ConfidenceRating {
    pub const ALL: [ConfidenceRating; 5] =
        [Self::VeryConfident, Self::SomewhatConfident, Self::Neutral, Self::SomewhatUnconfident, Self::VeryUnconfident];

    /// The exact label used in the confidence prompt.
    pub fn label(self) -> &'static str {
        match self {
            Self::VeryConfident => "Very Confident",
            Self::SomewhatConfident => "Somewhat Confident",
            Self::Neutral => "Neither Confident or Unconfident",
            Self::SomewhatUnconfident => "Somewhat Unconfident",
            Self::VeryUnconfident => "Very Unconfident",
        }
    }

    /// 1 (very unconfident) through 5 (very confident).
    pub fn score(self) -> u8 {
        self as u8 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseType {
    Diagnosis,
    Question,
}

impl ResponseType {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Diagnosis => "diagnosis",
            Self::Question => "question",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "response_type", content = "content", rename_all = "lowercase")]
pub enum ProposalContent {
    Diagnosis(Vec<String>),
    Question(String),
}

impl ProposalContent {
    pub fn response_type(&self) -> ResponseType {
        match self {
            Self::Diagnosis(_) => ResponseType::Diagnosis,
            Self::Question(_) => ResponseType::Question,
        }
    }

    pub fn as_text(&self) -> String {
        match self {
            Self::Diagnosis(names) => names.join("; "),
            Self::Question(q) => q.clone(),
        }
    }

    pub fn to_value(&self) -> Value {
        match self {
            Self::Diagnosis(names) => Value::from(names.clone()),
            Self::Question(q) => Value::from(q.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub specialist: SpecialistIdentity,
    pub content: ProposalContent,
    pub confidence: u8,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeamUpdate {
    pub add: Vec<SpecialistIdentity>,
    pub remove: Vec<SpecialistIdentity>,
    pub updated_list: Vec<SpecialistIdentity>,
    pub rationale: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Vote {
    Agree,
    Disagree,
}

/// What a final response must look like.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnswerFormat {
    /// A ranked list of diagnosis names.
    OpenEnded,
    /// A single option letter from `letters`.
    MultipleChoice { letters: Vec<char> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoctorSettings {
    pub prompts: PromptSet,
    pub central_model: String,
    pub specialist_model: String,
    pub generative_temperature: f64,
    pub categorical_temperature: f64,
    /// Solo protocol diagnoses at or above this rating.
    pub diagnose_threshold: ConfidenceRating,
    /// Fraction of the other members whose AGREE accepts a proposal.
    pub agreement_threshold: f64,
    pub max_team_size: usize,
    pub answer_format: AnswerFormat,
}

impl Default for DoctorSettings {
    fn default() -> Self {
        Self {
            prompts: PromptSet::open_ended(),
            central_model: "gpt-4.1".into(),
            specialist_model: "gpt-4.1".into(),
            generative_temperature: GENERATIVE_TEMPERATURE,
            categorical_temperature: CATEGORICAL_TEMPERATURE,
            diagnose_threshold: ConfidenceRating::SomewhatConfident,
            agreement_threshold: 0.5,
            max_team_size: MAX_TEAM_SIZE,
            answer_format: AnswerFormat::OpenEnded,
        }
    }
}

/// Everything an agent call needs: the session-bound gateway, the session id
/// used in call keys, and the protocol settings.
#[derive(Debug, Clone, Copy)]
pub struct AgentCtx<'a> {
    pub gateway: &'a Gateway,
    pub session: &'a str,
    pub settings: &'a DoctorSettings,
}

impl<'a> AgentCtx<'a> {
    pub fn new(gateway: &'a Gateway, session: &'a str, settings: &'a DoctorSettings) -> Self {
        Self { gateway, session, settings }
    }

    pub fn key(&self, role: impl Into<String>, round: u32) -> CallKey {
        CallKey::new(self.session, role, round)
    }

    fn central_request(&self, system: String, user: String) -> ChatRequest {
        ChatRequest::new(system, user)
            .model(self.settings.central_model.clone())
            .temperature(self.settings.generative_temperature)
    }

    fn specialist_request(&self, system: String, user: String, categorical: bool) -> ChatRequest {
        let t = if categorical { self.settings.categorical_temperature } else { self.settings.generative_temperature };
        ChatRequest::new(system, user).model(self.settings.specialist_model.clone()).temperature(t)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DoctorError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("every team member abstained in round {round}")]
    AllAbstained { round: u32 },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
}

/// Reads a list of names from a JSON array or from a string such as
/// `"[A, B, C]"`, `"A; B"` or a numbered multi-line list.
pub fn parse_name_list(value: &Value) -> Result<Vec<String>, String> {
    let names: Vec<String> = match value {
        Value::Array(items) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => clean_name(s),
                other => clean_name(&other.to_string()),
            })
            .collect(),
        Value::String(s) => {
            let s = s.trim();
            if let Ok(Value::Array(items)) = serde_json::from_str::<Value>(s) {
                return parse_name_list(&Value::Array(items));
            }
            let inner = s.strip_prefix('[').and_then(|x| x.strip_suffix(']')).unwrap_or(s);
            let parts: Vec<&str> = if inner.contains('\n') {
                inner.lines().collect()
            } else if inner.contains(';') {
                inner.split(';').collect()
            } else {
                inner.split(',').collect()
            };
            parts.into_iter().map(clean_name).collect()
        }
        Value::Null => Vec::new(),
        other => return Err(format!("expected a list, found {other}")),
    };
    Ok(names.into_iter().filter(|n| !n.is_empty()).collect())
}

fn clean_name(raw: &str) -> String {
    let s = raw.trim().trim_end_matches(',');
    let s = s.trim_start_matches(['-', '*', '•']).trim();
    // "1." / "1)" numbering
    let s = match s.find(|c: char| !c.is_ascii_digit()) {
        Some(i) if i > 0 && matches!(s.as_bytes()[i], b'.' | b')') => s[i + 1..].trim(),
        _ => s,
    };
    s.trim_matches(|c| c == '"' || c == '\'' || c == '*').trim().to_string()
}

/// Parses `RESPONSE_CONTENT` for a final response under `format`.
pub fn parse_final_content(value: &Value, format: &AnswerFormat) -> Result<Vec<String>, String> {
    match format {
        AnswerFormat::OpenEnded => {
            let names = parse_name_list(value)?;
            if names.is_empty() {
                return Err("diagnosis list is empty".into());
            }
            Ok(names)
        }
        AnswerFormat::MultipleChoice { letters } => {
            let text = match value {
                Value::Array(items) if items.len() == 1 => items[0].as_str().unwrap_or_default().to_string(),
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            parse_option_letter(&text, letters)
                .map(|c| vec![c.to_string()])
                .ok_or_else(|| format!("'{}' is not one of the options {letters:?}", text.trim()))
        }
    }
}

/// Accepts `B`, `B.`, `(B)`, `B) text`, `Option B`.
pub fn parse_option_letter(text: &str, letters: &[char]) -> Option<char> {
    let t = text.trim().trim_matches(|c| c == '"' || c == '\'' || c == '[' || c == ']').trim();
    let t = t.strip_prefix("Option ").or_else(|| t.strip_prefix("option ")).unwrap_or(t);
    let t = t.trim_start_matches('(');
    let mut chars = t.chars();
    let first = chars.next()?.to_ascii_uppercase();
    let rest = chars.as_str();
    let boundary = rest.is_empty() || rest.starts_with(|c: char| c == '.' || c == ')' || c == ':' || c.is_whitespace());
    (boundary && letters.contains(&first)).then_some(first)
}
