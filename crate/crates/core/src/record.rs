//! Patient record model.
//!
//! One JSON document per patient, keyed with the section names used by the
//! dataset builder (`Admission_info`, `Demographics`, `Diagnoses`,
//! `Chief Complaint`, ...). Sections the model does not know about are kept
//! verbatim in [`PatientRecord::extra`] so new extractors can add data without
//! a schema change.

use std::fmt;
use std::sync::OnceLock;

use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

pub const ADMISSION_INFO: &str = "Admission_info";
pub const DEMOGRAPHICS: &str = "Demographics";
pub const DIAGNOSES: &str = "Diagnoses";
pub const PRESCRIPTION: &str = "Prescription";
pub const PROCEDURE: &str = "Procedure";
pub const CHART_DATA: &str = "Chart Data";
pub const LAB_DATA: &str = "Lab Data";
pub const RESPIRATORY: &str = "Respiratory";
pub const ECG: &str = "ECG";
pub const ECHO: &str = "Echo";
pub const RADIOLOGY: &str = "Radiology";
pub const INTRODUCTION: &str = "Introduction";
pub const ALLERGIES: &str = "Allergies";
pub const CHIEF_COMPLAINT: &str = "Chief Complaint";
pub const HISTORY_OF_PRESENT_ILLNESS: &str = "History of Present Illness";
pub const PAST_MEDICAL_HISTORY: &str = "Past Medical History";
pub const SOCIAL_HISTORY: &str = "Social History";
pub const FAMILY_HISTORY: &str = "Family History";
pub const PHYSICAL_EXAM: &str = "Physical Exam";
pub const MAJOR_PROCEDURE: &str = "Major Surgical or Invasive Procedure";
pub const MEDICATIONS_ON_ADMISSION: &str = "Medications on Admission";

/// Narrative sections produced by discharge-summary structuring.
pub const NARRATIVE_SECTIONS: [&str; 10] = [
    INTRODUCTION,
    CHIEF_COMPLAINT,
    HISTORY_OF_PRESENT_ILLNESS,
    PAST_MEDICAL_HISTORY,
    SOCIAL_HISTORY,
    FAMILY_HISTORY,
    ALLERGIES,
    PHYSICAL_EXAM,
    MAJOR_PROCEDURE,
    MEDICATIONS_ON_ADMISSION,
];

const KNOWN_SECTIONS: [&str; 21] = [
    ADMISSION_INFO,
    DEMOGRAPHICS,
    DIAGNOSES,
    PRESCRIPTION,
    PROCEDURE,
    CHART_DATA,
    LAB_DATA,
    RESPIRATORY,
    ECG,
    ECHO,
    RADIOLOGY,
    INTRODUCTION,
    ALLERGIES,
    CHIEF_COMPLAINT,
    HISTORY_OF_PRESENT_ILLNESS,
    PAST_MEDICAL_HISTORY,
    SOCIAL_HISTORY,
    FAMILY_HISTORY,
    PHYSICAL_EXAM,
    MAJOR_PROCEDURE,
    MEDICATIONS_ON_ADMISSION,
];

/// Sections that are never shown to the answering model in the fallback path.
pub const REDACTED_SECTIONS: [&str; 3] = [ADMISSION_INFO, DEMOGRAPHICS, DIAGNOSES];

/// Maximum number of ground-truth diagnoses a record may carry (exclusive).
pub const MAX_DIAGNOSES_EXCLUSIVE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    #[serde(rename = "Admission_info")]
    pub admission_info: AdmissionInfo,
    #[serde(rename = "Demographics")]
    pub demographics: Demographics,
    #[serde(rename = "Diagnoses")]
    pub diagnoses: Vec<GroundTruthDiagnosis>,
    #[serde(rename = "Prescription", default)]
    pub prescription: Vec<String>,
    #[serde(rename = "Procedure", default)]
    pub procedure: Vec<ProcedureEntry>,
    #[serde(rename = "Chart Data", default)]
    pub chart_data: Measurements,
    #[serde(rename = "Lab Data", default)]
    pub lab_data: Measurements,
    #[serde(rename = "Respiratory", default)]
    pub respiratory: Measurements,
    #[serde(rename = "ECG", default)]
    pub ecg: Vec<TimedReport>,
    #[serde(rename = "Echo", default)]
    pub echo: Vec<TimedReport>,
    #[serde(rename = "Radiology", default)]
    pub radiology: Vec<RadiologyReport>,
    #[serde(rename = "Introduction", default, skip_serializing_if = "Option::is_none")]
    pub introduction: Option<Value>,
    #[serde(rename = "Allergies", default, skip_serializing_if = "Option::is_none")]
    pub allergies: Option<Value>,
    #[serde(rename = "Chief Complaint", default, skip_serializing_if = "Option::is_none")]
    pub chief_complaint: Option<Value>,
    #[serde(rename = "History of Present Illness", default, skip_serializing_if = "Option::is_none")]
    pub history_of_present_illness: Option<Value>,
    #[serde(rename = "Past Medical History", default, skip_serializing_if = "Option::is_none")]
    pub past_medical_history: Option<Value>,
    #[serde(rename = "Social History", default, skip_serializing_if = "Option::is_none")]
    pub social_history: Option<Value>,
    #[serde(rename = "Family History", default, skip_serializing_if = "Option::is_none")]
    pub family_history: Option<Value>,
    #[serde(rename = "Physical Exam", default, skip_serializing_if = "Option::is_none")]
    pub physical_exam: Option<Value>,
    #[serde(rename = "Major Surgical or Invasive Procedure", default, skip_serializing_if = "Option::is_none")]
    pub major_surgical_or_invasive_procedure: Option<Value>,
    #[serde(rename = "Medications on Admission", default, skip_serializing_if = "Option::is_none")]
    pub medications_on_admission: Option<Value>,
    /// Sections outside the known schema, preserved verbatim.
    #[serde(flatten)]
    pub extra: IndexMap<String, Value>,
}

/// Measurement name → observations.
pub type Measurements = IndexMap<String, Vec<Observation>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionInfo {
    #[serde(deserialize_with = "opaque_id")]
    pub patient_id: String,
    #[serde(deserialize_with = "opaque_id")]
    pub admission_id: String,
    pub admission_diagnosis: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub insurance: String,
    pub language: String,
    pub marital_status: String,
    pub ethnicity: String,
    pub gender: String,
    pub age: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub religion: Option<String>,
    #[serde(flatten)]
    pub extra: IndexMap<String, Value>,
}

/// A ground-truth diagnosis, stored on disk as `[code, short_title, long_title]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(String, String, String)", into = "(String, String, String)")]
pub struct GroundTruthDiagnosis {
    pub icd9_code: String,
    pub short_title: String,
    pub long_title: String,
}

impl From<(String, String, String)> for GroundTruthDiagnosis {
    fn from((icd9_code, short_title, long_title): (String, String, String)) -> Self {
        Self { icd9_code, short_title, long_title }
    }
}

impl From<GroundTruthDiagnosis> for (String, String, String) {
    fn from(d: GroundTruthDiagnosis) -> Self {
        (d.icd9_code, d.short_title, d.long_title)
    }
}

/// `[code, description, timestamp]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcedureEntry(pub String, pub String, pub String);

impl ProcedureEntry {
    pub fn timestamp(&self) -> &str {
        &self.2
    }
}

/// `[timestamp, value with units]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation(pub String, pub String);

/// `[timestamp, report text]`, used for ECG and echo reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedReport(pub String, pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiologyReport {
    #[serde(default)]
    pub time: String,
    #[serde(default)]
    pub part: String,
    #[serde(rename = "medical condition", default, skip_serializing_if = "Option::is_none")]
    pub medical_condition: Option<String>,
    #[serde(
        rename = "reason for this examination",
        alias = "ppm reason for this examination",
        alias = "reason",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub reason: Option<String>,
    #[serde(rename = "final report history", default, skip_serializing_if = "Option::is_none")]
    pub final_report_history: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub findings: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impression: Option<String>,
    #[serde(flatten)]
    pub extra: IndexMap<String, Value>,
}

fn opaque_id<'de, D: Deserializer<'de>>(de: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Text(String),
        Int(i64),
        Uint(u64),
    }
    Ok(match Raw::deserialize(de)? {
        Raw::Text(s) => s,
        Raw::Int(i) => i.to_string(),
        Raw::Uint(u) => u.to_string(),
    })
}

fn icd9_grammar() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:\d{3,5}|V\d{2,4}|E\d{3,4})$").expect("static regex"))
}

/// True when `code` is a syntactically valid ICD-9 diagnosis code without dots.
pub fn is_icd9_code(code: &str) -> bool {
    icd9_grammar().is_match(code)
}

/// A single invariant violation found while validating a raw record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Every invariant a raw document failed, with field paths.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.path.contains(needle) || v.message.contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid patient record")?;
        for v in &self.violations {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedRecord {
    pub record: PatientRecord,
    pub warnings: Vec<String>,
}

/// Validates a parsed JSON document against the record invariants.
///
/// Accepts either a bare record object or one wrapped as `{"Patient": {...}}`.
/// On success every timestamped list is sorted by timestamp (stable, lexical).
pub fn validate_patient_record(raw: &Value) -> Result<ValidatedRecord, ValidationReport> {
    let doc = unwrap_patient(raw);
    let mut violations = Vec::new();
    let mut push = |path: &str, message: String| violations.push(Violation { path: path.to_string(), message });

    let Some(obj) = doc.as_object() else {
        push("<document>", "expected a JSON object".into());
        return Err(ValidationReport { violations });
    };

    match obj.get(ADMISSION_INFO) {
        None => push(ADMISSION_INFO, "missing required section".into()),
        Some(Value::Object(m)) if m.is_empty() => push(ADMISSION_INFO, "must not be empty".into()),
        Some(Value::Object(m)) => {
            for key in ["patient_id", "admission_id", "admission_diagnosis"] {
                if !m.contains_key(key) {
                    push(&format!("{ADMISSION_INFO}.{key}"), "missing required field".into());
                }
            }
        }
        Some(_) => push(ADMISSION_INFO, "expected an object".into()),
    }

    match obj.get(DEMOGRAPHICS) {
        None => push(DEMOGRAPHICS, "missing required section".into()),
        Some(Value::Object(m)) if m.is_empty() => push(DEMOGRAPHICS, "must not be empty".into()),
        Some(Value::Object(m)) => match m.get("age") {
            None => push(&format!("{DEMOGRAPHICS}.age"), "missing required field".into()),
            Some(age) => {
                if !age.as_i64().is_some_and(|a| a >= 0) {
                    push(&format!("{DEMOGRAPHICS}.age"), format!("must be a non-negative integer (found {age})"));
                }
            }
        },
        Some(_) => push(DEMOGRAPHICS, "expected an object".into()),
    }

    match obj.get(DIAGNOSES) {
        None => push(DIAGNOSES, "missing required section".into()),
        Some(Value::Array(items)) => {
            if items.is_empty() {
                push(DIAGNOSES, "must be non-empty".into());
            }
            if items.len() >= MAX_DIAGNOSES_EXCLUSIVE {
                push(
                    DIAGNOSES,
                    format!("must contain fewer than {MAX_DIAGNOSES_EXCLUSIVE} entries (found {})", items.len()),
                );
            }
            for (i, item) in items.iter().enumerate() {
                match item.as_array().map(Vec::as_slice) {
                    Some([Value::String(code), Value::String(_), Value::String(_)]) => {
                        if !is_icd9_code(code) {
                            push(&format!("{DIAGNOSES}[{i}][0]"), format!("'{code}' is not a valid ICD-9 code"));
                        }
                    }
                    _ => push(&format!("{DIAGNOSES}[{i}]"), "expected [code, short_title, long_title]".into()),
                }
            }
        }
        Some(_) => push(DIAGNOSES, "expected an array".into()),
    }

    if !violations.is_empty() {
        return Err(ValidationReport { violations });
    }

    let mut record: PatientRecord = match serde_json::from_value(doc.clone()) {
        Ok(r) => r,
        Err(e) => {
            return Err(ValidationReport {
                violations: vec![Violation { path: "<document>".into(), message: e.to_string() }],
            })
        }
    };
    for (field, value) in
        [("patient_id", &record.admission_info.patient_id), ("admission_id", &record.admission_info.admission_id)]
    {
        if value.trim().is_empty() {
            violations
                .push(Violation { path: format!("{ADMISSION_INFO}.{field}"), message: "must not be empty".into() });
        }
    }
    if !violations.is_empty() {
        return Err(ValidationReport { violations });
    }

    let warnings = obj
        .keys()
        .filter(|k| !KNOWN_SECTIONS.contains(&k.as_str()))
        .map(|k| format!("unknown section '{k}' preserved verbatim"))
        .collect();
    record.sort_timestamps();
    Ok(ValidatedRecord { record, warnings })
}

fn unwrap_patient(raw: &Value) -> &Value {
    match raw.as_object() {
        Some(m) if m.len() == 1 && m.contains_key("Patient") => &m["Patient"],
        _ => raw,
    }
}

impl PatientRecord {
    pub fn patient_id(&self) -> &str {
        &self.admission_info.patient_id
    }

    /// Parses and validates a record file's contents.
    pub fn from_json_str(text: &str) -> Result<ValidatedRecord, ValidationReport> {
        let raw: Value = serde_json::from_str(text).map_err(|e| ValidationReport {
            violations: vec![Violation { path: "<document>".into(), message: e.to_string() }],
        })?;
        validate_patient_record(&raw)
    }

    /// Serializes in the on-disk layout, wrapped under a `Patient` key.
    pub fn to_json_pretty(&self) -> String {
        let wrapped = serde_json::json!({ "Patient": self });
        serde_json::to_string_pretty(&wrapped).expect("record serialization is infallible")
    }

    /// The record as an ordered section map.
    pub fn to_sections(&self) -> Map<String, Value> {
        match serde_json::to_value(self).expect("record serialization is infallible") {
            Value::Object(m) => m,
            _ => unreachable!("records serialize to objects"),
        }
    }

    fn sort_timestamps(&mut self) {
        self.procedure.sort_by(|a, b| a.timestamp().cmp(b.timestamp()));
        for series in [&mut self.chart_data, &mut self.lab_data, &mut self.respiratory] {
            for obs in series.values_mut() {
                obs.sort_by(|a, b| a.0.cmp(&b.0));
            }
        }
        self.ecg.sort_by(|a, b| a.0.cmp(&b.0));
        self.echo.sort_by(|a, b| a.0.cmp(&b.0));
        self.radiology.sort_by(|a, b| a.time.cmp(&b.time));
    }
}

/// Renders a section value as plain text: strings verbatim, objects as
/// `key: value` lines, arrays one item per line.
pub fn value_to_text(value: &Value) -> String {
    fn walk(value: &Value, indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent);
        match value {
            Value::Object(m) => {
                for (k, v) in m {
                    match v {
                        Value::Object(_) | Value::Array(_) => {
                            out.push_str(&format!("{pad}{k}:\n"));
                            walk(v, indent + 1, out);
                        }
                        _ => out.push_str(&format!("{pad}{k}: {}\n", scalar(v))),
                    }
                }
            }
            Value::Array(items) => {
                for item in items {
                    match item {
                        Value::Array(inner) if inner.iter().all(|x| !x.is_object() && !x.is_array()) => {
                            let parts: Vec<String> = inner.iter().map(scalar).collect();
                            out.push_str(&format!("{pad}- {}\n", parts.join(" | ")));
                        }
                        Value::Object(_) | Value::Array(_) => {
                            out.push_str(&format!("{pad}-\n"));
                            walk(item, indent + 1, out);
                        }
                        _ => out.push_str(&format!("{pad}- {}\n", scalar(item))),
                    }
                }
            }
            _ => out.push_str(&format!("{pad}{}\n", scalar(value))),
        }
    }
    fn scalar(v: &Value) -> String {
        match v {
            Value::String(s) => s.clone(),
            Value::Null => "null".into(),
            other => other.to_string(),
        }
    }
    if let Value::String(s) = value {
        return s.clone();
    }
    let mut out = String::new();
    walk(value, 0, &mut out);
    out.trim_end().to_string()
}

fn non_blank(value: Option<&Value>) -> Option<String> {
    let text = value_to_text(value?);
    let trimmed = text.trim();
    (!trimmed.is_empty()).then(|| trimmed.to_string())
}

/// The opening visit-log text: demographics, presenting complaint and the
/// reason for the visit. The Diagnoses section is never read.
pub fn render_initial_presentation(record: &PatientRecord) -> String {
    let d = &record.demographics;
    let or_unknown = |s: &str| {
        let t = s.trim();
        if t.is_empty() {
            "not recorded".to_string()
        } else {
            t.to_string()
        }
    };
    let mut out = String::new();
    out.push_str(&format!("Patient: {}-year-old, gender {}.\n", d.age, or_unknown(&d.gender)));
    out.push_str(&format!(
        "Demographics: ethnicity {}; language {}; marital status {}; insurance {}.\n",
        or_unknown(&d.ethnicity),
        or_unknown(&d.language),
        or_unknown(&d.marital_status),
        or_unknown(&d.insurance),
    ));
    match non_blank(record.chief_complaint.as_ref()) {
        Some(cc) => out.push_str(&format!("Chief complaint: {cc}\n")),
        None => match non_blank(record.introduction.as_ref()) {
            Some(intro) => out.push_str(&format!("Patient introduction: {intro}\n")),
            None => out.push_str("Chief complaint: not recorded\n"),
        },
    }
    out.push_str(&format!("Reason for visit: {}", or_unknown(&record.admission_info.admission_diagnosis)));
    out
}

/// A record with admission info, demographics and diagnoses stripped; every
/// other section is carried over unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RedactedRecord {
    sections: Map<String, Value>,
}

impl RedactedRecord {
    /// Redacts a raw record document (bare or `Patient`-wrapped).
    pub fn from_document(doc: &Value) -> Self {
        let mut sections = unwrap_patient(doc).as_object().cloned().unwrap_or_default();
        for key in REDACTED_SECTIONS {
            sections.shift_remove(key);
        }
        Self { sections }
    }

    pub fn redact(&self) -> Self {
        Self::from_document(&Value::Object(self.sections.clone()))
    }

    pub fn sections(&self) -> &Map<String, Value> {
        &self.sections
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.sections).expect("json map serialization is infallible")
    }
}

pub fn redact_for_fallback(record: &PatientRecord) -> RedactedRecord {
    RedactedRecord::from_document(&Value::Object(record.to_sections()))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use serde_json::json;

    pub(crate) fn appendix_document() -> Value {
        json!({
            "Patient": {
                "Admission_info": {
                    "patient_id": "10001",
                    "admission_id": "20001",
                    "admission_diagnosis": "arrhythmia"
                },
                "Demographics": {
                    "insurance": "private",
                    "language": "engl",
                    "marital_status": "married",
                    "ethnicity": "white",
                    "gender": "M",
                    "age": 60
                },
                "Diagnoses": [["4019", "Hypertension NOS", "Unspecified essential hypertension"]],
                "Prescription": ["Sodium Chloride 0.9%  Flush", "Lisinopril", "Heparin"],
                "Introduction": "Hi, I'm a 60-year-old male. I was referred here by my clinic because my doctor was concerned about a possible arrhythmia.",
                "ECG": [["2105-03-03", "Atrial pacing and A-V conduction which is new compared to previous tracings."]],
                "Radiology": [{
                    "time": "2105-03-03",
                    "part": "CHEST (PA & LAT)",
                    "medical condition": "60 year old man with new dual chamber",
                    "ppm reason for this examination": "Evaluate lead position",
                    "final report history": "Pacemaker placement.",
                    "findings": "In comparison with the study of , there has been placement of a dual-channel pacer. No other acute cardiopulmonary disease."
                }],
                "Allergies": "No Known Allergies / Adverse Drug Reactions",
                "Chief Complaint": "Fatigue, lightheadedness, bradycardia, sinus pauses",
                "Major Surgical or Invasive Procedure": "Pacemaker placement (St. Medical Accent PM2210 dual chamber pacemaker)",
                "Physical Exam": {"Admission": {
                    "VS": "T=98.0 BP=158/91 HR=61 RR=18 O2 sat=95",
                    "HEENT": "NCAT. Sclera anicteric. PERRL, EOMI."
                }},
                "Respiratory": {"O2 saturation pulseoxymetry": [["2105-02-28 03:15:00", "97.0 %"]]}
            }
        })
    }

    pub(crate) fn appendix_record() -> PatientRecord {
        validate_patient_record(&appendix_document()).unwrap().record
    }

    #[test]
    fn appendix_example_validates() {
        let v = validate_patient_record(&appendix_document()).unwrap();
        assert!(v.warnings.is_empty());
        assert_eq!(v.record.admission_info.admission_diagnosis, "arrhythmia");
        assert_eq!(v.record.demographics.age, 60);
        assert_eq!(v.record.radiology[0].reason.as_deref(), Some("Evaluate lead position"));
    }

    #[test]
    fn empty_diagnoses_rejected() {
        let mut doc = appendix_document();
        doc["Patient"]["Diagnoses"] = json!([]);
        let report = validate_patient_record(&doc).unwrap_err();
        assert!(report.violations.iter().any(|v| v.path == "Diagnoses"));
    }

    #[test]
    fn five_diagnoses_rejected() {
        let mut doc = appendix_document();
        let entry = doc["Patient"]["Diagnoses"][0].clone();
        doc["Patient"]["Diagnoses"] = Value::Array(vec![entry; 5]);
        let report = validate_patient_record(&doc).unwrap_err();
        assert!(report.mentions("fewer than 5"));
        doc["Patient"]["Diagnoses"].as_array_mut().unwrap().pop();
        assert!(validate_patient_record(&doc).is_ok());
    }

    #[test]
    fn missing_required_sections_all_reported() {
        let doc = json!({"Prescription": []});
        let report = validate_patient_record(&doc).unwrap_err();
        for section in REDACTED_SECTIONS {
            assert!(report.violations.iter().any(|v| v.path == section), "{section}");
        }
    }

    #[test]
    fn malformed_code_and_negative_age() {
        let mut doc = appendix_document();
        doc["Patient"]["Diagnoses"][0][0] = json!("40.19");
        doc["Patient"]["Demographics"]["age"] = json!(-3);
        let report = validate_patient_record(&doc).unwrap_err();
        assert!(report.violations.iter().any(|v| v.path == "Diagnoses[0][0]"));
        assert!(report.violations.iter().any(|v| v.path == "Demographics.age"));
    }

    #[test]
    fn unknown_sections_warn_and_survive() {
        let mut doc = appendix_document();
        doc["Patient"]["Microbiology"] = json!(["no growth"]);
        let v = validate_patient_record(&doc).unwrap();
        assert_eq!(v.warnings.len(), 1);
        assert_eq!(v.record.extra["Microbiology"], json!(["no growth"]));
        assert_eq!(v.record.to_sections()["Microbiology"], json!(["no growth"]));
    }

    #[test]
    fn timestamps_sorted_after_validation() {
        let mut doc = appendix_document();
        doc["Patient"]["ECG"] = json!([["2105-03-04", "b"], ["2105-03-01", "a"]]);
        let v = validate_patient_record(&doc).unwrap();
        assert_eq!(v.record.ecg[0].0, "2105-03-01");
    }

    #[test]
    fn numeric_ids_accepted() {
        let mut doc = appendix_document();
        doc["Patient"]["Admission_info"]["patient_id"] = json!(42);
        assert_eq!(validate_patient_record(&doc).unwrap().record.patient_id(), "42");
    }

    #[test]
    fn presentation_contains_demographics_and_reason() {
        let text = render_initial_presentation(&appendix_record());
        for needle in ["60", "M", "arrhythmia", "Fatigue, lightheadedness"] {
            assert!(text.contains(needle), "{needle} missing from {text}");
        }
        assert!(!text.contains("4019"));
        assert!(!text.contains("Hypertension NOS"));
    }

    #[test]
    fn presentation_falls_back_to_introduction() {
        let mut r = appendix_record();
        r.chief_complaint = None;
        let text = render_initial_presentation(&r);
        assert!(text.contains("referred here by my clinic"));
    }

    #[test]
    fn presentation_keeps_coincidental_title_text() {
        let mut r = appendix_record();
        r.chief_complaint = Some(json!("Unspecified essential hypertension"));
        let text = render_initial_presentation(&r);
        assert!(text.contains("Unspecified essential hypertension"));
    }

    #[test]
    fn redaction_strips_three_sections_only() {
        let r = appendix_record();
        let red = redact_for_fallback(&r);
        for key in REDACTED_SECTIONS {
            assert!(!red.sections().contains_key(key));
        }
        let full = r.to_sections();
        for (k, v) in red.sections() {
            assert_eq!(serde_json::to_string(v).unwrap(), serde_json::to_string(&full[k]).unwrap());
        }
        assert_eq!(red.sections().len(), full.len() - 3);
        assert_eq!(red.redact(), red);
    }

    #[test]
    fn redaction_of_partial_document_is_idempotent() {
        let mut doc = appendix_document();
        doc["Patient"].as_object_mut().unwrap().remove("Demographics");
        let once = RedactedRecord::from_document(&doc);
        assert_eq!(once.redact(), once);
        assert!(!once.sections().contains_key(DIAGNOSES));
    }

    #[test]
    fn value_to_text_flattens_nested_maps() {
        let text = value_to_text(&json!({"Admission": {"VS": "BP 120/80"}}));
        assert_eq!(text, "Admission:\n  VS: BP 120/80");
    }
}
