//! Versioned prompt templates.
//!
//! Templates use named `{placeholder}` slots; only the names passed to
//! [`render`] are substituted, so literal JSON braces survive untouched.

use serde::{Deserialize, Serialize};

pub const PROMPT_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub version: String,
    pub triage: String,
    pub coordination: String,
    pub confidence: String,
    pub solo_diagnosis: String,
    pub solo_question: String,
    pub proposal: String,
    pub vote: String,
    /// Appended to the proposal context when the round cap forces a diagnosis.
    pub final_diagnosis: String,
}

impl PromptSet {
    /// Templates for open-ended diagnosis.
    pub fn open_ended() -> Self {
        Self {
            version: PROMPT_VERSION.into(),
            triage: include_str!("../prompts/triage.v1.txt").into(),
            coordination: include_str!("../prompts/coordination.v1.txt").into(),
            confidence: include_str!("../prompts/confidence.v1.txt").into(),
            solo_diagnosis: include_str!("../prompts/solo_diagnosis.v1.txt").into(),
            solo_question: include_str!("../prompts/solo_question.v1.txt").into(),
            proposal: include_str!("../prompts/proposal.v1.txt").into(),
            vote: include_str!("../prompts/vote.v1.txt").into(),
            final_diagnosis: include_str!("../prompts/final_diagnosis.v1.txt").into(),
        }
    }

    /// Templates adapted so the final response is a single option letter.
    pub fn multiple_choice() -> Self {
        Self {
            confidence: include_str!("../prompts/mcq_confidence.v1.txt").into(),
            solo_diagnosis: include_str!("../prompts/mcq_solo_answer.v1.txt").into(),
            proposal: include_str!("../prompts/mcq_proposal.v1.txt").into(),
            final_diagnosis: include_str!("../prompts/mcq_final_answer.v1.txt").into(),
            ..Self::open_ended()
        }
    }
}

pub const PATIENT_ANSWER: &str = include_str!("../prompts/patient_answer.v1.txt");
pub const PATIENT_FALLBACK: &str = include_str!("../prompts/patient_fallback.v1.txt");
pub const SUMMARY_STRUCTURING: &str = include_str!("../prompts/summary_structuring.v1.txt");

/// Substitutes each `{name}` with its value.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}
