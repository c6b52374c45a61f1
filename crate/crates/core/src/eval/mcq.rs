//! Multiple-choice benchmark adapter: each case becomes a session whose
//! patient answers from a free-text context and whose final response is one
//! option letter.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::doctor::AnswerFormat;
use crate::gateway::Gateway;
use crate::patient::{ContextPatient, PatientSettings};
use crate::workflow::{run_session, SessionConfig, SessionRun};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqCase {
    pub id: String,
    /// What the simulated patient knows.
    pub context: String,
    pub question: String,
    /// Letter → option text, in display order.
    pub options: IndexMap<char, String>,
    pub answer: char,
    /// Opening statement shown to the doctors; defaults to the question.
    #[serde(default)]
    pub presentation: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum McqError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("case {id}: {message}")]
    Invalid { id: String, message: String },
}

impl McqCase {
    pub fn validate(&self) -> Result<(), McqError> {
        let bad = |message: &str| McqError::Invalid { id: self.id.clone(), message: message.into() };
        if self.options.len() < 2 {
            return Err(bad("needs at least two options"));
        }
        if self.options.keys().any(|c| !c.is_ascii_uppercase()) {
            return Err(bad("option letters must be upper-case A-Z"));
        }
        if !self.options.contains_key(&self.answer) {
            return Err(bad("answer key is not one of the options"));
        }
        Ok(())
    }

    pub fn letters(&self) -> Vec<char> {
        self.options.keys().copied().collect()
    }

    /// Presentation plus the question and its lettered options.
    pub fn initial_presentation(&self) -> String {
        let mut text = self.presentation.clone().unwrap_or_default();
        if !text.is_empty() {
            text.push_str("\n\n");
        }
        text.push_str("Question: ");
        text.push_str(&self.question);
        for (letter, option) in &self.options {
            text.push_str(&format!("\n{letter}. {option}"));
        }
        text
    }
}

/// One case per non-blank JSONL line.
pub fn parse_mcq_cases(text: &str) -> Result<Vec<McqCase>, McqError> {
    let mut cases = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let case: McqCase =
            serde_json::from_str(line).map_err(|e| McqError::Parse { line: i + 1, message: e.to_string() })?;
        case.validate()?;
        cases.push(case);
    }
    Ok(cases)
}

pub fn load_mcq_cases(path: &Path) -> Result<Vec<McqCase>, McqError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| McqError::Io { path: path.display().to_string(), source })?;
    parse_mcq_cases(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqOutcome {
    pub id: String,
    pub expected: char,
    /// `None` when the session aborted or produced no valid letter.
    pub predicted: Option<char>,
    pub correct: bool,
    pub questions: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqReport {
    pub accuracy: f64,
    pub n: usize,
    pub correct: usize,
    pub per_case: Vec<McqOutcome>,
}

/// Runs every case through the normal session loop with a letter-constrained
/// final answer. Aborted sessions count as incorrect.
pub fn run_mcq_benchmark(cases: &[McqCase], config: &SessionConfig, gateway: &Gateway) -> (McqReport, Vec<SessionRun>) {
    let mut per_case = Vec::with_capacity(cases.len());
    let mut runs = Vec::with_capacity(cases.len());
    for case in cases {
        let mut cfg = config.clone();
        cfg.answer_format = AnswerFormat::MultipleChoice { letters: case.letters() };
        let patient = ContextPatient {
            id: &case.id,
            presentation: case.initial_presentation(),
            context: &case.context,
            settings: PatientSettings { model: cfg.models.patient.clone(), temperature: cfg.temperature.patient },
        };
        let run = run_session(&patient, &cfg, gateway);
        let (predicted, questions) = match &run.outcome {
            Ok(r) => (r.final_diagnoses.first().and_then(|s| s.chars().next()), r.questions_asked),
            Err(_) => (None, 0),
        };
        per_case.push(McqOutcome {
            id: case.id.clone(),
            expected: case.answer,
            predicted,
            correct: predicted == Some(case.answer),
            questions,
        });
        runs.push(run);
    }
    let correct = per_case.iter().filter(|c| c.correct).count();
    let n = per_case.len();
    let accuracy = if n == 0 { 0.0 } else { correct as f64 / n as f64 };
    (McqReport { accuracy, n, correct, per_case }, runs)
}

/// Accuracy table with one row per (agent, dataset) pair.
pub fn render_mcq_table(rows: &[(&str, &str, f64)]) -> String {
    let mut out = format!("{:<12} {:<12} {:>8}\n", "Agent", "Dataset", "Accuracy");
    for (agent, dataset, accuracy) in rows {
        out.push_str(&format!("{:<12} {:<12} {:>8.1}\n", agent, dataset, accuracy * 100.0));
    }
    out
}
