mod common;

use dynamicare::patient::RecordPatient;
use dynamicare::record::{redact_for_fallback, render_initial_presentation, PatientRecord};
use dynamicare::run::load_records;
use dynamicare::transcript::TranscriptEvent;
use dynamicare::visit::AnswerStage;
use dynamicare::workflow::{run_session, SessionConfig};

/// Every code, short title and long title of the record's diagnoses found in `text`.
pub fn leaks(record: &PatientRecord, text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut found = Vec::new();
    for d in &record.diagnoses {
        for title in [&d.short_title, &d.long_title] {
            if lower.contains(&title.to_lowercase()) {
                found.push(title.clone());
            }
        }
        // codes only count as whole alphanumeric tokens
        let code = d.icd9_code.to_lowercase();
        if lower.split(|c: char| !c.is_ascii_alphanumeric()).any(|tok| tok == code) {
            found.push(d.icd9_code.clone());
        }
    }
    found
}

fn corpus() -> Vec<PatientRecord> {
    let records = load_records(&common::fixture("leakage")).unwrap();
    assert_eq!(records.len(), 50);
    records
}

#[test]
fn fixture_keeps_diagnoses_out_of_other_sections() {
    for r in corpus() {
        let mut sections = r.to_sections();
        sections.shift_remove("Diagnoses");
        let text = serde_json::to_string(&sections).unwrap();
        assert!(leaks(&r, &text).is_empty(), "{}", r.patient_id());
        // the detector itself fires on the withheld section
        assert!(!leaks(&r, &serde_json::to_string(&r.diagnoses).unwrap()).is_empty());
    }
}

#[test]
fn fallback_context_drops_identity_and_diagnoses() {
    for r in corpus() {
        let redacted = redact_for_fallback(&r);
        for key in ["Admission_info", "Demographics", "Diagnoses"] {
            assert!(!redacted.sections().contains_key(key), "{} kept {key}", r.patient_id());
        }
        assert!(redacted.sections().contains_key("Prescription"));
        assert!(leaks(&r, &redacted.to_json_pretty()).is_empty());
    }
}

#[test]
fn no_prompt_ever_sees_a_diagnosis() {
    let gateway = common::scripted("leakage_script.jsonl");
    let config = SessionConfig { protocol: dynamicare::workflow::Protocol::Solo, max_rounds: 20, ..Default::default() };
    let mut stages = (0, 0);
    for r in corpus() {
        assert!(leaks(&r, &render_initial_presentation(&r)).is_empty());
        let run = run_session(&RecordPatient::new(&r), &config, &gateway);
        let result = run.outcome.as_ref().unwrap_or_else(|e| panic!("{}: {e:?}", r.patient_id()));
        assert_eq!(result.questions_asked, 16);
        for e in &run.events {
            match e {
                TranscriptEvent::Prompt { role, system, user, .. } => {
                    assert!(leaks(&r, system).is_empty(), "{} {role}", r.patient_id());
                    assert!(leaks(&r, user).is_empty(), "{} {role}: {:?}", r.patient_id(), leaks(&r, user));
                }
                TranscriptEvent::Turn { stage, .. } => match stage {
                    AnswerStage::MatchedSection => stages.0 += 1,
                    AnswerStage::Fallback => stages.1 += 1,
                },
                _ => {}
            }
        }
    }
    assert!(stages.0 > 0 && stages.1 > 0, "{stages:?}");
}
