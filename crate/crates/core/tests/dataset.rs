mod common;

use std::collections::HashSet;

use dynamicare::dataset::{
    build_dataset, dedupe_and_sample, dedupe_earliest, discharge_summary_text, filter_admissions,
    parse_discharge_summary, sample_ids, BuildOptions, DatasetError, FilterCriteria, SourceTables,
};
use dynamicare::record::PatientRecord;
use serde_json::json;

fn tables() -> SourceTables {
    SourceTables::load(&common::fixture("mimic/tables")).expect("fixture tables load")
}

const SURVIVORS: [&str; 10] =
    ["100001", "100004", "100008", "100010", "100013", "100016", "100017", "100018", "100019", "100020"];

#[test]
fn filter_returns_hand_enumerated_survivors() {
    let t = tables();
    assert_eq!(t.admissions.len(), 20);
    let kept = filter_admissions(&t, &FilterCriteria::default()).unwrap();
    assert_eq!(kept, SURVIVORS);
}

#[test]
fn diagnosis_count_boundary() {
    let t = tables();
    let kept: HashSet<String> = filter_admissions(&t, &FilterCriteria::default()).unwrap().into_iter().collect();
    for five in ["100002", "100009"] {
        assert_eq!(t.diagnosis_count(five), 5);
        assert!(!kept.contains(five), "{five} has exactly five diagnoses");
    }
    for four in ["100004", "100013"] {
        assert_eq!(t.diagnosis_count(four), 4);
        assert!(kept.contains(four), "{four} has four diagnoses");
    }
}

#[test]
fn each_exclusion_rule_fires() {
    let t = tables();
    let find = |id: &str| t.admission(id).unwrap();
    for newborn in ["100003", "100007", "100015"] {
        assert!(find(newborn).is_newborn());
    }
    assert!(find("100005").deceased());
    assert!(find("100012").deceased());
    for no_summary in ["100006", "100014"] {
        assert!(discharge_summary_text(&t, no_summary).is_none());
    }
    // With every rule disabled except completeness, the two summary-less
    // admissions are the only ones dropped.
    let loose = FilterCriteria {
        max_diagnoses_exclusive: 100,
        exclude_newborn: false,
        exclude_deceased: false,
        ..FilterCriteria::default()
    };
    assert_eq!(filter_admissions(&t, &loose).unwrap().len(), 18);
}

#[test]
fn dedupe_keeps_earliest_admission() {
    let t = tables();
    let kept: HashSet<String> = SURVIVORS.iter().map(|s| s.to_string()).collect();
    let unique = dedupe_earliest(t.admissions.iter().filter(|a| kept.contains(&a.admission_id)));
    let ids: Vec<&str> = unique.iter().map(|a| a.admission_id.as_str()).collect();
    assert_eq!(ids, ["100017", "100004", "100008", "100010", "100013", "100016", "100018", "100020"]);
}

#[test]
fn sampling_is_seed_reproducible() {
    let t = tables();
    let kept = filter_admissions(&t, &FilterCriteria::default()).unwrap();
    let a = dedupe_and_sample(&t, &kept, 5, 11).unwrap();
    let b = dedupe_and_sample(&t, &kept, 5, 11).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.iter().collect::<HashSet<_>>().len(), 5);
    let all = dedupe_and_sample(&t, &kept, 8, 3).unwrap();
    assert_eq!(all.iter().collect::<HashSet<_>>().len(), 8);
    assert!(matches!(
        dedupe_and_sample(&t, &kept, 9, 0),
        Err(DatasetError::SampleTooLarge { requested: 9, available: 8 })
    ));
    let ids: Vec<String> = (0..50).map(|i| format!("id{i}")).collect();
    let seeds: HashSet<Vec<String>> = (0..5).map(|s| sample_ids(&ids, 10, s).unwrap()).collect();
    assert!(seeds.len() > 1, "different seeds should give different samples");
}

#[test]
fn discharge_summary_structuring_matches_expected_map() {
    let t = tables();
    let text = discharge_summary_text(&t, "100017").unwrap();
    assert_eq!(text.lines().count(), 10);
    let gw = common::scripted("mimic/summary_script.jsonl");
    let s = parse_discharge_summary(&text, &gw, "100017", "gpt-4.1").unwrap();
    let expected = json!({
        "Introduction": "Hi, I'm an 88-year-old man. My clinic sent me in because I have been tired and lightheaded and my heart has been pausing.",
        "Allergies": "No Known Allergies / Adverse Drug Reactions",
        "Chief Complaint": "Fatigue, lightheadedness, bradycardia, sinus pauses",
        "History of Present Illness": "88 year old man with hypertension who presents with two weeks of fatigue and lightheadedness. Holter showed sinus pauses up to 4 seconds.",
        "Past Medical History": "Hypertension. Atrial fibrillation.",
        "Social History": "Retired teacher, lives with wife, no tobacco.",
        "Family History": "Father with coronary disease.",
        "Physical Exam": {"Admission": {"VS": "T=98.0 BP=158/91 HR=61 RR=18 O2 sat=95", "HEENT": "NCAT. Sclera anicteric."}},
        "Major Surgical or Invasive Procedure": "Pacemaker placement (dual chamber)",
        "extra": {"Service": "MEDICINE"}
    });
    assert_eq!(serde_json::Value::Object(s.sections), expected);
    assert_eq!(s.warnings.len(), 1);
}

#[test]
fn full_pipeline_matches_golden_record() {
    let out = tempfile::tempdir().unwrap();
    let gw = common::scripted("mimic/summary_script.jsonl");
    let options = BuildOptions { n: 8, seed: 5, criteria: FilterCriteria::default(), model: "gpt-4.1".into(), jobs: 4 };
    let manifest = build_dataset(&common::fixture("mimic/tables"), out.path(), &options, &gw).unwrap();
    let c = &manifest.counts;
    assert_eq!((c.admissions, c.filtered, c.unique_patients, c.sampled, c.written), (20, 10, 8, 8, 8));
    assert!(out.path().join("manifest.json").is_file());

    let text = std::fs::read_to_string(out.path().join("501.json")).unwrap();
    common::assert_golden("mimic/golden_501.json", &text);
    let record = PatientRecord::from_json_str(&text).unwrap().record;
    assert_eq!(record.admission_info.admission_id, "100017");
    assert_eq!(record.demographics.age, 88);
    let codes: Vec<&str> = record.diagnoses.iter().map(|d| d.icd9_code.as_str()).collect();
    assert_eq!(codes, ["42731", "4019", "4280"]);
    assert_eq!(record.prescription, ["Heparin", "Lisinopril"]);
    assert!(record.respiratory.contains_key("O2 saturation pulseoxymetry"));
    assert!(!record.chart_data.contains_key("O2 saturation pulseoxymetry"));
    assert_eq!(record.radiology[0].reason.as_deref(), Some("Evaluate lead position"));

    let old = PatientRecord::from_json_str(&std::fs::read_to_string(out.path().join("516.json")).unwrap()).unwrap();
    assert_eq!(old.record.demographics.age, 90);

    // Same seed, same patients.
    let again = tempfile::tempdir().unwrap();
    let m2 = build_dataset(&common::fixture("mimic/tables"), again.path(), &options, &gw).unwrap();
    assert_eq!(m2.patients, manifest.patients);
}
