mod common;

use std::time::Instant;

use dynamicare::patient::RecordPatient;
use dynamicare::transcript::{to_jsonl, TranscriptEvent};
use dynamicare::workflow::{run_session, SessionConfig, StopReason};

#[test]
fn fall_scenario_replays_golden_transcript() {
    let started = Instant::now();
    let record = common::record("fall_scenario/patient.json");
    let gateway = common::scripted("fall_scenario/script.jsonl");
    let run = run_session(&RecordPatient::new(&record), &SessionConfig::default(), &gateway);
    let result = run.outcome.as_ref().expect("session completes");

    assert_eq!(result.stop_reason, StopReason::Diagnosis);
    assert_eq!(result.questions_asked, 3);
    assert_eq!(result.rounds_used, 4);
    assert_eq!(result.final_diagnoses[0], "Acute subdural hematoma");
    assert!(result.violations.is_empty(), "{:?}", result.violations);

    let history: Vec<(u32, Vec<String>)> = result.team_history.iter().map(|t| (t.round_formed, t.names())).collect();
    assert_eq!(
        history,
        vec![
            (1, vec!["Neurologist".to_string(), "Neurosurgeon".to_string()]),
            (3, vec!["Neurologist".to_string(), "Neurosurgeon".to_string(), "Radiologist".to_string()]),
        ]
    );
    let changes: Vec<_> = run
        .events
        .iter()
        .filter_map(|e| match e {
            TranscriptEvent::TeamChange { round, add, remove, .. } if *round > 0 => {
                Some((*round, add.clone(), remove.clone()))
            }
            _ => None,
        })
        .collect();
    assert_eq!(changes, vec![(2, vec!["Radiologist".to_string()], vec![])]);

    common::assert_golden("fall_scenario/golden_transcript.jsonl", &to_jsonl(&run.events));
    assert!(started.elapsed().as_secs_f64() < 5.0);
}
