//! Builds per-patient records from relational admission and note tables.
//!
//! Input is a directory of CSV files named after the MIMIC-III tables
//! (`ADMISSIONS.csv`, `PATIENTS.csv`, `DIAGNOSES_ICD.csv`, ...). Output is one
//! `<patient_id>.json` per sampled admission plus `manifest.json`.

mod sections;

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::gateway::{CallKey, ChatRequest, Gateway, GatewayError, CATEGORICAL_TEMPERATURE};
use crate::prompts::SUMMARY_STRUCTURING;
use crate::record::{
    validate_patient_record, ValidatedRecord, ValidationReport, ADMISSION_INFO, CHART_DATA, DEMOGRAPHICS, DIAGNOSES,
    LAB_DATA, MAX_DIAGNOSES_EXCLUSIVE, NARRATIVE_SECTIONS, PRESCRIPTION, PROCEDURE,
};
use crate::transcript::write_atomic;

pub use sections::{extract_report_sections, render_sections, ReportKind};

/// Completeness marker for the discharge-summary note.
pub const DISCHARGE_SUMMARY: &str = "Discharge summary";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("required table {0} not found")]
    MissingTable(String),
    #[error("reading {table}: {source}")]
    Csv { table: String, source: csv::Error },
    #[error("invalid filter criteria: {0}")]
    Criteria(String),
    #[error("cannot sample {requested} patients: only {available} unique patients remain")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("admission {admission_id}: {message}")]
    Admission { admission_id: String, message: String },
    #[error("admission {admission_id}: discharge summary structuring failed: {source}")]
    Structuring { admission_id: String, source: GatewayError },
    #[error("admission {admission_id}: {report}")]
    Invalid { admission_id: String, report: ValidationReport },
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Deserialize)]
pub struct AdmissionRow {
    #[serde(rename = "SUBJECT_ID")]
    pub patient_id: String,
    #[serde(rename = "HADM_ID")]
    pub admission_id: String,
    #[serde(rename = "ADMITTIME")]
    pub admit_time: String,
    #[serde(rename = "DEATHTIME", default)]
    pub death_time: String,
    #[serde(rename = "ADMISSION_TYPE")]
    pub admission_type: String,
    #[serde(rename = "DISCHARGE_LOCATION", default)]
    pub discharge_location: String,
    #[serde(rename = "HOSPITAL_EXPIRE_FLAG", default)]
    pub hospital_expire_flag: String,
    #[serde(rename = "INSURANCE", default)]
    pub insurance: String,
    #[serde(rename = "LANGUAGE", default)]
    pub language: String,
    #[serde(rename = "RELIGION", default)]
    pub religion: String,
    #[serde(rename = "MARITAL_STATUS", default)]
    pub marital_status: String,
    #[serde(rename = "ETHNICITY", default)]
    pub ethnicity: String,
    #[serde(rename = "DIAGNOSIS", default)]
    pub admission_diagnosis: String,
}

impl AdmissionRow {
    pub fn is_newborn(&self) -> bool {
        self.admission_type.trim().eq_ignore_ascii_case("NEWBORN")
    }

    /// Any death marker: a death time, the expire flag, or a death discharge
    /// disposition.
    pub fn deceased(&self) -> bool {
        let location = self.discharge_location.to_uppercase();
        !self.death_time.trim().is_empty()
            || self.hospital_expire_flag.trim() == "1"
            || location.contains("DEAD")
            || location.contains("EXPIRED")
    }
}

#[derive(Debug, Clone, Deserialize)]
struct PatientRow {
    #[serde(rename = "SUBJECT_ID")]
    patient_id: String,
    #[serde(rename = "GENDER", default)]
    gender: String,
    #[serde(rename = "DOB")]
    dob: String,
}

#[derive(Debug, Clone, Deserialize)]
struct CodeRow {
    #[serde(rename = "HADM_ID")]
    admission_id: String,
    #[serde(rename = "SEQ_NUM", default)]
    seq_num: Option<u32>,
    #[serde(rename = "ICD9_CODE")]
    code: String,
    #[serde(rename = "CHARTDATE", default)]
    chart_date: String,
}

#[derive(Debug, Clone, Deserialize)]
struct CodeTitle {
    #[serde(rename = "ICD9_CODE")]
    code: String,
    #[serde(rename = "SHORT_TITLE", default)]
    short_title: String,
    #[serde(rename = "LONG_TITLE", default)]
    long_title: String,
}

#[derive(Debug, Clone, Deserialize)]
struct PrescriptionRow {
    #[serde(rename = "HADM_ID")]
    admission_id: String,
    #[serde(rename = "DRUG")]
    drug: String,
}

#[derive(Debug, Clone, Deserialize)]
struct EventRow {
    #[serde(rename = "HADM_ID")]
    admission_id: String,
    #[serde(rename = "ITEMID")]
    item_id: String,
    #[serde(rename = "CHARTTIME", default)]
    chart_time: String,
    #[serde(rename = "VALUE", default)]
    value: String,
    #[serde(rename = "VALUEUOM", default)]
    unit: String,
}

#[derive(Debug, Clone, Deserialize)]
struct ItemDef {
    #[serde(rename = "ITEMID")]
    item_id: String,
    #[serde(rename = "LABEL")]
    label: String,
    #[serde(rename = "CATEGORY", default)]
    category: String,
}

#[derive(Debug, Clone, Deserialize)]
struct NoteRow {
    #[serde(rename = "HADM_ID")]
    admission_id: String,
    #[serde(rename = "CHARTDATE", default)]
    chart_date: String,
    #[serde(rename = "CHARTTIME", default)]
    chart_time: String,
    #[serde(rename = "CATEGORY")]
    category: String,
    #[serde(rename = "DESCRIPTION", default)]
    description: String,
    #[serde(rename = "TEXT")]
    text: String,
}

impl NoteRow {
    fn timestamp(&self) -> String {
        if self.chart_time.trim().is_empty() { self.chart_date.trim() } else { self.chart_time.trim() }.to_string()
    }

    fn is(&self, category: &str) -> bool {
        self.category.trim().eq_ignore_ascii_case(category)
    }
}

fn group<T>(rows: Vec<T>, key: impl Fn(&T) -> &str) -> HashMap<String, Vec<T>> {
    let mut out: HashMap<String, Vec<T>> = HashMap::new();
    for r in rows {
        out.entry(key(&r).trim().to_string()).or_default().push(r);
    }
    out
}

fn read_table<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Vec<T>, DatasetError> {
    let path = dir.join(format!("{name}.csv"));
    if !path.is_file() {
        return Err(DatasetError::MissingTable(path.display().to_string()));
    }
    let csv_err = |source| DatasetError::Csv { table: name.to_string(), source };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::Headers).from_path(&path).map_err(csv_err)?;
    reader.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err)
}

/// All source tables, with event tables grouped by admission id.
#[derive(Debug, Clone)]
pub struct SourceTables {
    pub admissions: Vec<AdmissionRow>,
    patients: HashMap<String, PatientRow>,
    diagnoses: HashMap<String, Vec<CodeRow>>,
    diagnosis_titles: HashMap<String, CodeTitle>,
    prescriptions: HashMap<String, Vec<PrescriptionRow>>,
    procedures: HashMap<String, Vec<CodeRow>>,
    procedure_titles: HashMap<String, CodeTitle>,
    chart_events: HashMap<String, Vec<EventRow>>,
    chart_items: HashMap<String, ItemDef>,
    lab_events: HashMap<String, Vec<EventRow>>,
    lab_items: HashMap<String, ItemDef>,
    notes: HashMap<String, Vec<NoteRow>>,
}

fn by_key<T>(rows: Vec<T>, key: impl Fn(&T) -> &str) -> HashMap<String, T> {
    rows.into_iter().map(|r| (key(&r).trim().to_string(), r)).collect()
}

impl SourceTables {
    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let admissions: Vec<AdmissionRow> = read_table(dir, "ADMISSIONS")?;
        Ok(Self {
            admissions,
            patients: by_key(read_table::<PatientRow>(dir, "PATIENTS")?, |r| &r.patient_id),
            diagnoses: group(read_table::<CodeRow>(dir, "DIAGNOSES_ICD")?, |r| &r.admission_id),
            diagnosis_titles: by_key(read_table::<CodeTitle>(dir, "D_ICD_DIAGNOSES")?, |r| &r.code),
            prescriptions: group(read_table::<PrescriptionRow>(dir, "PRESCRIPTIONS")?, |r| &r.admission_id),
            procedures: group(read_table::<CodeRow>(dir, "PROCEDURES_ICD")?, |r| &r.admission_id),
            procedure_titles: by_key(read_table::<CodeTitle>(dir, "D_ICD_PROCEDURES")?, |r| &r.code),
            chart_events: group(read_table::<EventRow>(dir, "CHARTEVENTS")?, |r| &r.admission_id),
            chart_items: by_key(read_table::<ItemDef>(dir, "D_ITEMS")?, |r| &r.item_id),
            lab_events: group(read_table::<EventRow>(dir, "LABEVENTS")?, |r| &r.admission_id),
            lab_items: by_key(read_table::<ItemDef>(dir, "D_LABITEMS")?, |r| &r.item_id),
            notes: group(read_table::<NoteRow>(dir, "NOTEEVENTS")?, |r| &r.admission_id),
        })
    }

    pub fn admission(&self, admission_id: &str) -> Option<&AdmissionRow> {
        self.admissions.iter().find(|a| a.admission_id.trim() == admission_id)
    }

    fn rows<'a, T>(map: &'a HashMap<String, Vec<T>>, admission_id: &str) -> &'a [T] {
        map.get(admission_id.trim()).map_or(&[], Vec::as_slice)
    }

    pub fn diagnosis_count(&self, admission_id: &str) -> usize {
        Self::rows(&self.diagnoses, admission_id).len()
    }

    fn discharge_summaries(&self, admission_id: &str) -> impl Iterator<Item = &NoteRow> {
        Self::rows(&self.notes, admission_id).iter().filter(|n| n.is(DISCHARGE_SUMMARY))
    }

    /// Whether `section` has at least one row for `admission`.
    fn has_section(&self, admission: &AdmissionRow, section: &str) -> bool {
        let id = admission.admission_id.as_str();
        match section {
            ADMISSION_INFO => true,
            DEMOGRAPHICS => self.patients.contains_key(admission.patient_id.trim()),
            DIAGNOSES => !Self::rows(&self.diagnoses, id).is_empty(),
            PRESCRIPTION => !Self::rows(&self.prescriptions, id).is_empty(),
            PROCEDURE => !Self::rows(&self.procedures, id).is_empty(),
            CHART_DATA => !Self::rows(&self.chart_events, id).is_empty(),
            LAB_DATA => !Self::rows(&self.lab_events, id).is_empty(),
            DISCHARGE_SUMMARY => self.discharge_summaries(id).next().is_some(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCriteria {
    pub max_diagnoses_exclusive: usize,
    pub exclude_newborn: bool,
    pub exclude_deceased: bool,
    pub required_sections: Vec<String>,
}

const COMPLETENESS_SECTIONS: [&str; 8] =
    [ADMISSION_INFO, DEMOGRAPHICS, DIAGNOSES, PRESCRIPTION, PROCEDURE, CHART_DATA, LAB_DATA, DISCHARGE_SUMMARY];

impl Default for FilterCriteria {
    fn default() -> Self {
        Self {
            max_diagnoses_exclusive: MAX_DIAGNOSES_EXCLUSIVE,
            exclude_newborn: true,
            exclude_deceased: true,
            required_sections: COMPLETENESS_SECTIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl FilterCriteria {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.max_diagnoses_exclusive < 1 {
            return Err(DatasetError::Criteria("max_diagnoses_exclusive must be at least 1".into()));
        }
        if let Some(s) = self.required_sections.iter().find(|s| !COMPLETENESS_SECTIONS.contains(&s.as_str())) {
            return Err(DatasetError::Criteria(format!("unknown required section '{s}'")));
        }
        Ok(())
    }
}

/// Admission ids passing `criteria`, in table order.
pub fn filter_admissions(tables: &SourceTables, criteria: &FilterCriteria) -> Result<Vec<String>, DatasetError> {
    criteria.validate()?;
    Ok(tables
        .admissions
        .iter()
        .filter(|a| !(criteria.exclude_newborn && a.is_newborn()))
        .filter(|a| !(criteria.exclude_deceased && a.deceased()))
        .filter(|a| tables.diagnosis_count(&a.admission_id) < criteria.max_diagnoses_exclusive)
        .filter(|a| criteria.required_sections.iter().all(|s| tables.has_section(a, s)))
        .map(|a| a.admission_id.trim().to_string())
        .collect())
}

/// One admission per patient (the earliest; ties by admission id), ordered
/// by patient id.
pub fn dedupe_earliest<'a>(admissions: impl IntoIterator<Item = &'a AdmissionRow>) -> Vec<&'a AdmissionRow> {
    let mut best: HashMap<&str, &AdmissionRow> = HashMap::new();
    for a in admissions {
        let slot = best.entry(a.patient_id.trim()).or_insert(a);
        let key = |r: &AdmissionRow| (r.admit_time.trim().to_string(), r.admission_id.trim().to_string());
        if key(a) < key(slot) {
            *slot = a;
        }
    }
    let mut kept: Vec<&AdmissionRow> = best.into_values().collect();
    kept.sort_by(|a, b| a.patient_id.trim().cmp(b.patient_id.trim()));
    kept
}

/// Seeded uniform sample of `n` ids: shuffle then take a prefix.
pub fn sample_ids(ids: &[String], n: usize, seed: u64) -> Result<Vec<String>, DatasetError> {
    if n > ids.len() {
        return Err(DatasetError::SampleTooLarge { requested: n, available: ids.len() });
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    shuffled.truncate(n);
    Ok(shuffled)
}

/// Dedupes `admission_ids` to one per patient, then samples `n` of them.
pub fn dedupe_and_sample(
    tables: &SourceTables,
    admission_ids: &[String],
    n: usize,
    seed: u64,
) -> Result<Vec<String>, DatasetError> {
    let wanted: HashSet<&str> = admission_ids.iter().map(String::as_str).collect();
    let rows = tables.admissions.iter().filter(|a| wanted.contains(a.admission_id.trim()));
    let unique: Vec<String> = dedupe_earliest(rows).into_iter().map(|a| a.admission_id.trim().to_string()).collect();
    sample_ids(&unique, n, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredSummary {
    pub sections: Map<String, Value>,
    pub warnings: Vec<String>,
}

/// Structures a discharge summary into narrative sections through the model.
/// Keys outside the narrative vocabulary are kept under `extra`.
pub fn parse_discharge_summary(
    text: &str,
    gateway: &Gateway,
    admission_id: &str,
    model: &str,
) -> Result<StructuredSummary, DatasetError> {
    if text.trim().is_empty() {
        return Err(DatasetError::Admission {
            admission_id: admission_id.into(),
            message: "discharge summary is empty".into(),
        });
    }
    let key = CallKey::new(admission_id, "summary_parser", 0);
    let request = ChatRequest::new(SUMMARY_STRUCTURING, text).model(model).temperature(CATEGORICAL_TEMPERATURE);
    let parsed = gateway
        .complete_structured(&key, &request, &[])
        .map_err(|source| DatasetError::Structuring { admission_id: admission_id.into(), source })?;

    let mut sections = Map::new();
    let mut extra = Map::new();
    let mut warnings = Vec::new();
    for (k, v) in parsed {
        if matches!(&v, Value::Null) || v.as_str().is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        match NARRATIVE_SECTIONS.iter().find(|s| s.eq_ignore_ascii_case(k.trim())) {
            Some(canonical) => {
                sections.insert(canonical.to_string(), v);
            }
            None => {
                warnings.push(format!("admission {admission_id}: unexpected summary section '{k}' kept under extra"));
                extra.insert(k, v);
            }
        }
    }
    if !extra.is_empty() {
        sections.insert("extra".into(), Value::Object(extra));
    }
    for w in &warnings {
        tracing::warn!("{w}");
    }
    Ok(StructuredSummary { sections, warnings })
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim().get(..10)?, "%Y-%m-%d").ok()
}

/// Whole years between birth and admission. Ages above 89 are reported as 90
/// because the source shifts those birth dates far into the past.
fn age_at(dob: &str, admit: &str) -> Option<u32> {
    let (birth, at) = (parse_date(dob)?, parse_date(admit)?);
    let mut years = at.year() - birth.year();
    if (at.month(), at.day()) < (birth.month(), birth.day()) {
        years -= 1;
    }
    u32::try_from(years).ok().map(|y| y.min(90))
}

fn measurements(rows: &[EventRow], items: &HashMap<String, ItemDef>, keep: impl Fn(Option<&ItemDef>) -> bool) -> Value {
    let mut out: IndexMap<String, Vec<Value>> = IndexMap::new();
    for r in rows {
        let def = items.get(r.item_id.trim());
        if !keep(def) {
            continue;
        }
        let label = def.map_or_else(|| format!("item {}", r.item_id.trim()), |d| d.label.trim().to_string());
        let value = format!("{} {}", r.value.trim(), r.unit.trim()).trim().to_string();
        out.entry(label).or_default().push(json!([r.chart_time.trim(), value]));
    }
    json!(out)
}

fn is_respiratory(def: Option<&ItemDef>) -> bool {
    def.is_some_and(|d| d.category.trim().eq_ignore_ascii_case("Respiratory"))
}

fn radiology_entry(note: &NoteRow) -> Value {
    let mut s = extract_report_sections(&note.text, ReportKind::Radiology);
    let mut entry = Map::new();
    entry.insert("time".into(), json!(note.timestamp()));
    entry.insert("part".into(), json!(note.description.trim()));
    let mut take = |field: &str, keys: &[&str]| {
        if let Some(v) = keys.iter().find_map(|k| s.shift_remove(*k)) {
            entry.insert(field.into(), json!(v));
        }
    };
    take("medical condition", &["medical condition"]);
    take("reason for this examination", &["reason for this examination", "reason"]);
    take("final report history", &["history", "clinical history"]);
    take("findings", &["findings"]);
    take("impression", &["impression"]);
    for (k, v) in s {
        entry.insert(k, json!(v));
    }
    Value::Object(entry)
}

fn timed_reports(notes: &[NoteRow], category: &str, kind: ReportKind) -> Value {
    let items: Vec<Value> = notes
        .iter()
        .filter(|n| n.is(category))
        .map(|n| json!([n.timestamp(), render_sections(&extract_report_sections(&n.text, kind))]))
        .collect();
    json!(items)
}

/// The concatenated discharge summary text for an admission.
pub fn discharge_summary_text(tables: &SourceTables, admission_id: &str) -> Option<String> {
    let texts: Vec<&str> = tables.discharge_summaries(admission_id).map(|n| n.text.trim()).collect();
    (!texts.is_empty()).then(|| texts.join("\n\n"))
}

/// Merges every table's rows for one admission with the structured summary
/// sections into a validated record.
pub fn assemble_patient_record(
    admission_id: &str,
    tables: &SourceTables,
    summary: &Map<String, Value>,
) -> Result<ValidatedRecord, DatasetError> {
    let fail = |message: String| DatasetError::Admission { admission_id: admission_id.into(), message };
    let adm = tables.admission(admission_id).ok_or_else(|| fail("not in ADMISSIONS".into()))?;
    let patient = tables
        .patients
        .get(adm.patient_id.trim())
        .ok_or_else(|| fail(format!("patient {} not in PATIENTS", adm.patient_id.trim())))?;
    let age = age_at(&patient.dob, &adm.admit_time).ok_or_else(|| {
        fail(format!("cannot compute age from DOB '{}' and ADMITTIME '{}'", patient.dob, adm.admit_time))
    })?;

    let mut diagnoses: Vec<&CodeRow> = SourceTables::rows(&tables.diagnoses, admission_id).iter().collect();
    diagnoses.sort_by_key(|r| r.seq_num.unwrap_or(u32::MAX));
    let diagnoses: Vec<Value> = diagnoses
        .iter()
        .map(|r| {
            let code = r.code.trim();
            let t = tables.diagnosis_titles.get(code);
            json!([code, t.map_or("", |t| t.short_title.trim()), t.map_or("", |t| t.long_title.trim())])
        })
        .collect();

    let mut drugs: Vec<&str> = Vec::new();
    for r in SourceTables::rows(&tables.prescriptions, admission_id) {
        let d = r.drug.trim();
        if !d.is_empty() && !drugs.contains(&d) {
            drugs.push(d);
        }
    }

    let procedures: Vec<Value> = SourceTables::rows(&tables.procedures, admission_id)
        .iter()
        .map(|r| {
            let code = r.code.trim();
            let title = tables.procedure_titles.get(code).map_or("", |t| t.long_title.trim());
            json!([code, title, r.chart_date.trim()])
        })
        .collect();

    let charts = SourceTables::rows(&tables.chart_events, admission_id);
    let notes = SourceTables::rows(&tables.notes, admission_id);
    let radiology: Vec<Value> = notes.iter().filter(|n| n.is("Radiology")).map(radiology_entry).collect();

    let mut doc = Map::new();
    doc.insert(
        ADMISSION_INFO.into(),
        json!({
            "patient_id": adm.patient_id.trim(),
            "admission_id": adm.admission_id.trim(),
            "admission_diagnosis": adm.admission_diagnosis.trim(),
        }),
    );
    let mut demo = json!({
        "insurance": adm.insurance.trim(),
        "language": adm.language.trim(),
        "marital_status": adm.marital_status.trim(),
        "ethnicity": adm.ethnicity.trim(),
        "gender": patient.gender.trim(),
        "age": age,
    });
    if !adm.religion.trim().is_empty() {
        demo["religion"] = json!(adm.religion.trim());
    }
    doc.insert(DEMOGRAPHICS.into(), demo);
    doc.insert(DIAGNOSES.into(), json!(diagnoses));
    doc.insert(PRESCRIPTION.into(), json!(drugs));
    doc.insert(PROCEDURE.into(), json!(procedures));
    doc.insert(CHART_DATA.into(), measurements(charts, &tables.chart_items, |d| !is_respiratory(d)));
    doc.insert(
        LAB_DATA.into(),
        measurements(SourceTables::rows(&tables.lab_events, admission_id), &tables.lab_items, |_| true),
    );
    doc.insert(crate::record::RESPIRATORY.into(), measurements(charts, &tables.chart_items, is_respiratory));
    doc.insert(crate::record::ECG.into(), timed_reports(notes, "ECG", ReportKind::Ecg));
    doc.insert(crate::record::ECHO.into(), timed_reports(notes, "Echo", ReportKind::Echo));
    doc.insert(crate::record::RADIOLOGY.into(), json!(radiology));
    for (k, v) in summary {
        doc.insert(k.clone(), v.clone());
    }

    validate_patient_record(&Value::Object(doc))
        .map_err(|report| DatasetError::Invalid { admission_id: admission_id.into(), report })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub admissions: usize,
    pub filtered: usize,
    pub unique_patients: usize,
    pub sampled: usize,
    pub written: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub n: usize,
    pub criteria: FilterCriteria,
    pub dedupe_rule: String,
    pub counts: StageCounts,
    pub patients: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub n: usize,
    pub seed: u64,
    pub criteria: FilterCriteria,
    pub model: String,
    pub jobs: usize,
}

/// Runs the whole pipeline: load, filter, dedupe, sample, structure, assemble
/// and write. Files are written atomically; the manifest is written last.
pub fn build_dataset(
    tables_dir: &Path,
    out_dir: &Path,
    options: &BuildOptions,
    gateway: &Gateway,
) -> Result<DatasetManifest, DatasetError> {
    let tables = SourceTables::load(tables_dir)?;
    let filtered = filter_admissions(&tables, &options.criteria)?;
    let wanted: HashSet<&str> = filtered.iter().map(String::as_str).collect();
    let unique = dedupe_earliest(tables.admissions.iter().filter(|a| wanted.contains(a.admission_id.trim())));
    let unique_ids: Vec<String> = unique.iter().map(|a| a.admission_id.trim().to_string()).collect();
    let sampled = sample_ids(&unique_ids, options.n, options.seed)?;

    let build_one = |admission_id: &String| -> Result<(String, Vec<String>), DatasetError> {
        let text = discharge_summary_text(&tables, admission_id).unwrap_or_default();
        let summary = parse_discharge_summary(&text, gateway, admission_id, &options.model)?;
        let validated = assemble_patient_record(admission_id, &tables, &summary.sections)?;
        let id = validated.record.patient_id().to_string();
        let path = out_dir.join(format!("{id}.json"));
        write_atomic(&path, validated.record.to_json_pretty().as_bytes())
            .map_err(|source| DatasetError::Io { path, source })?;
        let mut warnings = summary.warnings;
        warnings.extend(validated.warnings.into_iter().map(|w| format!("patient {id}: {w}")));
        Ok((id, warnings))
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(options.jobs.max(1)).build().expect("thread pool");
    let built: Vec<(String, Vec<String>)> =
        pool.install(|| sampled.par_iter().map(build_one).collect::<Result<Vec<_>, _>>())?;

    let manifest = DatasetManifest {
        seed: options.seed,
        n: options.n,
        criteria: options.criteria.clone(),
        dedupe_rule: "earliest admission per patient".into(),
        counts: StageCounts {
            admissions: tables.admissions.len(),
            filtered: filtered.len(),
            unique_patients: unique_ids.len(),
            sampled: sampled.len(),
            written: built.len(),
        },
        patients: built.iter().map(|(id, _)| id.clone()).collect(),
        warnings: built.into_iter().flat_map(|(_, w)| w).collect(),
    };
    let path = out_dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&path, body.as_bytes()).map_err(|source| DatasetError::Io { path, source })?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adm(patient: &str, id: &str, time: &str) -> AdmissionRow {
        AdmissionRow {
            patient_id: patient.into(),
            admission_id: id.into(),
            admit_time: time.into(),
            death_time: String::new(),
            admission_type: "EMERGENCY".into(),
            discharge_location: "HOME".into(),
            hospital_expire_flag: "0".into(),
            insurance: String::new(),
            language: String::new(),
            religion: String::new(),
            marital_status: String::new(),
            ethnicity: String::new(),
            admission_diagnosis: String::new(),
        }
    }

    #[test]
    fn earliest_admission_kept() {
        let rows =
            [adm("7", "b", "2101-05-01 10:00:00"), adm("7", "a", "2100-01-01 08:00:00"), adm("3", "c", "2102-01-01")];
        let kept: Vec<&str> = dedupe_earliest(rows.iter()).iter().map(|a| a.admission_id.as_str()).collect();
        assert_eq!(kept, vec!["c", "a"]);
    }

    #[test]
    fn death_markers() {
        let mut a = adm("1", "1", "2100-01-01");
        assert!(!a.deceased());
        a.discharge_location = "DEAD/EXPIRED".into();
        assert!(a.deceased());
        let mut b = adm("1", "1", "2100-01-01");
        b.hospital_expire_flag = "1".into();
        assert!(b.deceased());
    }

    #[test]
    fn sampling_is_seeded() {
        let ids: Vec<String> = (0..100).map(|i| format!("p{i}")).collect();
        assert_eq!(sample_ids(&ids, 10, 7).unwrap(), sample_ids(&ids, 10, 7).unwrap());
        assert_ne!(sample_ids(&ids, 10, 7).unwrap(), sample_ids(&ids, 10, 8).unwrap());
        assert!(matches!(
            sample_ids(&ids, 101, 7),
            Err(DatasetError::SampleTooLarge { requested: 101, available: 100 })
        ));
    }

    #[test]
    fn ages() {
        assert_eq!(age_at("2045-03-04 00:00:00", "2105-03-03 10:00:00"), Some(59));
        assert_eq!(age_at("2045-03-03", "2105-03-03"), Some(60));
        assert_eq!(age_at("1800-01-01", "2105-03-03"), Some(90));
        assert_eq!(age_at("bad", "2105-03-03"), None);
    }

    #[test]
    fn criteria_validation() {
        let mut c = FilterCriteria::default();
        assert!(c.validate().is_ok());
        c.max_diagnoses_exclusive = 0;
        assert!(c.validate().is_err());
        let c = FilterCriteria { required_sections: vec!["Nope".into()], ..FilterCriteria::default() };
        assert!(c.validate().is_err());
    }
}
