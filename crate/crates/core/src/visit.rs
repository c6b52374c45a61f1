//! The visit log: the running case transcript that doctor agents see.

use serde::{Deserialize, Serialize};

use crate::doctor::TeamState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnswerStage {
    MatchedSection,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnEntry {
    pub round: u32,
    pub question: String,
    pub answer: String,
    pub answer_stage: AnswerStage,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VisitLogError {
    #[error("turn question must not be empty")]
    EmptyQuestion,
    #[error("turn answer must not be empty")]
    EmptyAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitLog {
    pub initial_presentation: String,
    turns: Vec<TurnEntry>,
    pub team_history: Vec<TeamState>,
}

impl VisitLog {
    pub fn new(initial_presentation: impl Into<String>) -> Self {
        Self { initial_presentation: initial_presentation.into(), turns: Vec::new(), team_history: Vec::new() }
    }

    pub fn turns(&self) -> &[TurnEntry] {
        &self.turns
    }

    /// Appends the next question/answer pair; rounds are numbered from 1.
    pub fn append(&mut self, question: &str, answer: &str, stage: AnswerStage) -> Result<&TurnEntry, VisitLogError> {
        if question.trim().is_empty() {
            return Err(VisitLogError::EmptyQuestion);
        }
        if answer.trim().is_empty() {
            return Err(VisitLogError::EmptyAnswer);
        }
        let round = self.turns.len() as u32 + 1;
        self.turns.push(TurnEntry {
            round,
            question: question.to_string(),
            answer: answer.to_string(),
            answer_stage: stage,
        });
        Ok(self.turns.last().expect("just pushed"))
    }

    pub fn asked(&self, question: &str) -> bool {
        let q = question.trim();
        self.turns.iter().any(|t| t.question.trim() == q)
    }

    /// The case as shown to doctor agents.
    pub fn render(&self) -> String {
        let mut out = format!("Initial presentation:\n{}\n\nConversation log:", self.initial_presentation);
        if self.turns.is_empty() {
            out.push_str("\n(no questions asked yet)");
        }
        for t in &self.turns {
            out.push_str(&format!("\nRound {}\nDoctor: {}\nPatient: {}", t.round, t.question, t.answer));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_are_consecutive() {
        let mut log = VisitLog::new("intro");
        log.append("q1", "a1", AnswerStage::Fallback).unwrap();
        log.append("q2", "a2", AnswerStage::MatchedSection).unwrap();
        let rounds: Vec<u32> = log.turns().iter().map(|t| t.round).collect();
        assert_eq!(rounds, vec![1, 2]);
        assert!(log.asked(" q2 "));
        assert!(log.render().contains("Round 2\nDoctor: q2\nPatient: a2"));
    }

    #[test]
    fn empty_turns_rejected() {
        let mut log = VisitLog::new("intro");
        assert_eq!(log.append(" ", "a", AnswerStage::Fallback), Err(VisitLogError::EmptyQuestion));
        assert_eq!(log.append("q", "", AnswerStage::Fallback), Err(VisitLogError::EmptyAnswer));
        assert!(log.turns().is_empty());
    }
}
