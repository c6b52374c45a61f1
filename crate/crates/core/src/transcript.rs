//! Session transcripts: one JSON event per line.

use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::visit::AnswerStage;
use crate::workflow::SessionResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum TranscriptEvent {
    Start {
        patient_id: String,
        config: serde_json::Value,
        prompt_version: String,
    },
    Prompt {
        role: String,
        round: u32,
        attempt: u32,
        model: String,
        temperature: f64,
        system: String,
        user: String,
    },
    Reply {
        role: String,
        round: u32,
        attempt: u32,
        text: String,
    },
    Turn {
        round: u32,
        question: String,
        answer: String,
        stage: AnswerStage,
        matched_sections: Vec<String>,
    },
    TeamChange {
        round: u32,
        previous: Vec<String>,
        updated: Vec<String>,
        add: Vec<String>,
        remove: Vec<String>,
        rationale: String,
    },
    Proposal {
        round: u32,
        specialist: String,
        response_type: String,
        content: serde_json::Value,
        confidence: u8,
        rationale: String,
    },
    Abstention {
        round: u32,
        specialist: String,
        reason: String,
    },
    Vote {
        round: u32,
        voter: String,
        candidate: String,
        vote: String,
    },
    Consensus {
        round: u32,
        accepted: String,
        rule: String,
    },
    Violation {
        round: u32,
        role: String,
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        raw: Option<String>,
    },
    Result(Box<SessionResult>),
    Abort {
        patient_id: String,
        reason: String,
    },
}

/// Append-only event buffer for one session.
#[derive(Debug, Default)]
pub struct Transcript {
    events: Mutex<Vec<TranscriptEvent>>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, event: TranscriptEvent) {
        self.events.lock().expect("transcript lock poisoned").push(event);
    }

    pub fn events(&self) -> Vec<TranscriptEvent> {
        self.events.lock().expect("transcript lock poisoned").clone()
    }

    pub fn violations(&self) -> Vec<String> {
        self.events
            .lock()
            .expect("transcript lock poisoned")
            .iter()
            .filter_map(|e| match e {
                TranscriptEvent::Violation { role, round, message, .. } => {
                    Some(format!("round {round} {role}: {message}"))
                }
                _ => None,
            })
            .collect()
    }
}

pub fn to_jsonl(events: &[TranscriptEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("transcript events serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_jsonl(text: &str) -> Result<Vec<TranscriptEvent>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

/// Writes `contents` to `path` via a temp file in the same directory and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
