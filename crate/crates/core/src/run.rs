//! Batch runs: config files, run directories, manifests and transcript
//! loading.
//!
//! A run directory holds `config.toml` (the file as given), `config.json`
//! (the effective configuration), `manifest.json`, and one
//! `<patient_id>.jsonl` transcript per session.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;

use chrono::{SecondsFormat, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eval::mcq::{run_mcq_benchmark, McqCase, McqReport};
use crate::gateway::{Gateway, LiveConfig};
use crate::patient::{PatientSettings, RecordPatient};
use crate::record::{GroundTruthDiagnosis, PatientRecord};
use crate::transcript::{parse_jsonl, to_jsonl, write_atomic, TranscriptEvent};
use crate::workflow::{run_session, ConfigError, SessionAbort, SessionConfig, SessionResult, SessionRun};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const EFFECTIVE_CONFIG: &str = "config.json";
pub const MCQ_REPORT: &str = "mcq.json";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    InvalidConfig(#[from] ConfigError),
    #[error("{path}: {message}")]
    Record { path: PathBuf, message: String },
    #[error("no patient records in {0}")]
    NoPatients(PathBuf),
    #[error("duplicate patient id {0}")]
    DuplicatePatient(String),
    #[error("run directory {0} already has results; pick a new run id or pass --force")]
    Exists(PathBuf),
    #[error("{0} is not a run directory (no {MANIFEST_FILE})")]
    NotARun(PathBuf),
    #[error("{path}: {message}")]
    Transcript { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.into(), source }
}

/// Live backend knobs; the endpoint and credential come from the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiveSettings {
    pub requests_per_minute: Option<u32>,
    pub max_attempts: u32,
    pub timeout_secs: u64,
}

impl Default for LiveSettings {
    fn default() -> Self {
        Self { requests_per_minute: None, max_attempts: 3, timeout_secs: 120 }
    }
}

impl LiveSettings {
    pub fn apply(&self, config: &mut LiveConfig) {
        config.requests_per_minute = self.requests_per_minute;
        config.max_attempts = self.max_attempts.max(1);
        config.timeout = std::time::Duration::from_secs(self.timeout_secs);
    }
}

/// Session settings at the top level of the file plus an optional `[live]`
/// table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub session: SessionConfig,
    #[serde(default)]
    pub live: LiveSettings,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        let live = match table.remove("live") {
            Some(v) => v.try_into().map_err(|e: toml::de::Error| RunError::Config(format!("[live]: {e}")))?,
            None => LiveSettings::default(),
        };
        let session: SessionConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| RunError::Config(e.to_string()))?;
        session.validate()?;
        Ok(Self { session, live })
    }

    pub fn to_toml(&self) -> String {
        let mut table = toml::Table::try_from(&self.session).expect("config serializes to TOML");
        table.insert("live".into(), toml::Value::try_from(&self.live).expect("live settings serialize"));
        toml::to_string_pretty(&table).expect("config serializes to TOML")
    }
}

/// Reads every `*.json` record in `dir`, sorted by patient id.
pub fn load_records(dir: &Path) -> Result<Vec<PatientRecord>, RunError> {
    let mut records = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json")
            || path.file_name() == Some("manifest.json".as_ref())
        {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let validated = PatientRecord::from_json_str(&text)
            .map_err(|report| RunError::Record { path: path.clone(), message: report.to_string() })?;
        for w in &validated.warnings {
            tracing::warn!(path = %path.display(), "{w}");
        }
        records.push(validated.record);
    }
    if records.is_empty() {
        return Err(RunError::NoPatients(dir.into()));
    }
    records.sort_by(|a, b| a.patient_id().cmp(b.patient_id()));
    if let Some(w) = records.windows(2).find(|w| w[0].patient_id() == w[1].patient_id()) {
        return Err(RunError::DuplicatePatient(w[0].patient_id().into()));
    }
    Ok(records)
}

/// Ground-truth diagnoses keyed by patient id.
pub fn truth_table(records: &[PatientRecord]) -> HashMap<String, Vec<GroundTruthDiagnosis>> {
    records.iter().map(|r| (r.patient_id().to_string(), r.diagnoses.clone())).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub completed: usize,
    pub aborted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub backend: String,
    pub config: RunConfig,
    pub source_revision: String,
    pub started_at: String,
    /// `None` while the run is in progress.
    pub finished_at: Option<String>,
    pub patients: Vec<String>,
    pub counts: RunCounts,
}

/// Current git commit of the working directory, or "unknown".
pub fn source_revision() -> String {
    Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub run_dir: PathBuf,
    pub config: RunConfig,
    /// The config file text as given, snapshotted verbatim.
    pub config_source: Option<String>,
    pub backend: String,
    pub jobs: usize,
    pub force: bool,
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), RunError> {
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n";
    write_atomic(&path, text.as_bytes()).map_err(io_err(&path))
}

fn prepare_dir(options: &RunOptions) -> Result<(), RunError> {
    let dir = &options.run_dir;
    if dir.exists() {
        let populated = std::fs::read_dir(dir).map_err(io_err(dir))?.next().is_some();
        if populated && !options.force {
            return Err(RunError::Exists(dir.clone()));
        }
        for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
            let path = entry.map_err(io_err(dir))?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if name.ends_with(".jsonl")
                || [MANIFEST_FILE, CONFIG_SNAPSHOT, EFFECTIVE_CONFIG, MCQ_REPORT, METRICS_FILE].contains(&name)
            {
                std::fs::remove_file(&path).map_err(io_err(&path))?;
            }
        }
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

fn begin_run(options: &RunOptions, patients: Vec<String>) -> Result<RunManifest, RunError> {
    options.config.session.validate()?;
    prepare_dir(options)?;
    let dir = &options.run_dir;

    let snapshot = options.config_source.clone().unwrap_or_else(|| options.config.to_toml());
    let snapshot_path = dir.join(CONFIG_SNAPSHOT);
    write_atomic(&snapshot_path, snapshot.as_bytes()).map_err(io_err(&snapshot_path))?;
    let effective_path = dir.join(EFFECTIVE_CONFIG);
    let effective = serde_json::to_string_pretty(&options.config).expect("config serializes") + "\n";
    write_atomic(&effective_path, effective.as_bytes()).map_err(io_err(&effective_path))?;

    let manifest = RunManifest {
        run_id: dir.file_name().map_or_else(|| "run".into(), |n| n.to_string_lossy().into_owned()),
        backend: options.backend.clone(),
        config: options.config.clone(),
        source_revision: source_revision(),
        started_at: now(),
        finished_at: None,
        patients,
        counts: RunCounts::default(),
    };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

fn write_transcript(dir: &Path, run: &SessionRun, patient_id: &str) -> Result<(), RunError> {
    let path = dir.join(format!("{patient_id}.jsonl"));
    write_atomic(&path, to_jsonl(&run.events).as_bytes()).map_err(io_err(&path))
}

fn finish_run(dir: &Path, mut manifest: RunManifest, counts: RunCounts) -> Result<RunManifest, RunError> {
    manifest.counts = counts;
    manifest.finished_at = Some(now());
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

/// Runs every record as one session, writing transcripts as sessions finish.
/// Sessions run on `jobs` worker threads; each is independent.
pub fn execute_run(
    records: &[PatientRecord],
    gateway: &Gateway,
    options: &RunOptions,
) -> Result<RunManifest, RunError> {
    let manifest = begin_run(options, records.iter().map(|r| r.patient_id().to_string()).collect())?;
    let dir = &options.run_dir;
    let session_cfg = &options.config.session;
    let settings =
        PatientSettings { model: session_cfg.models.patient.clone(), temperature: session_cfg.temperature.patient };
    let counts = Mutex::new(RunCounts::default());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.max(1))
        .build()
        .map_err(|e| RunError::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        records.par_iter().try_for_each(|record| {
            let mut patient = RecordPatient::new(record);
            patient.settings = settings.clone();
            let run = run_session(&patient, session_cfg, gateway);
            write_transcript(dir, &run, record.patient_id())?;
            let mut c = counts.lock().expect("counts lock");
            match run.outcome {
                Ok(_) => c.completed += 1,
                Err(_) => c.aborted += 1,
            }
            Ok::<_, RunError>(())
        })
    })?;
    finish_run(dir, manifest, counts.into_inner().expect("counts lock"))
}

/// Multiple-choice variant of [`execute_run`]; also writes `mcq.json`.
pub fn execute_mcq_run(
    cases: &[McqCase],
    gateway: &Gateway,
    options: &RunOptions,
) -> Result<(RunManifest, McqReport), RunError> {
    let manifest = begin_run(options, cases.iter().map(|c| c.id.clone()).collect())?;
    let dir = &options.run_dir;
    let (report, runs) = run_mcq_benchmark(cases, &options.config.session, gateway);
    let mut counts = RunCounts::default();
    for (case, run) in cases.iter().zip(&runs) {
        write_transcript(dir, run, &case.id)?;
        match run.outcome {
            Ok(_) => counts.completed += 1,
            Err(_) => counts.aborted += 1,
        }
    }
    let path = dir.join(MCQ_REPORT);
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_atomic(&path, text.as_bytes()).map_err(io_err(&path))?;
    Ok((finish_run(dir, manifest, counts)?, report))
}

#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub manifest: RunManifest,
    /// Completed sessions, sorted by patient id.
    pub results: Vec<SessionResult>,
    pub aborted: Vec<SessionAbort>,
}

/// Outcome recorded at the end of a transcript.
pub fn transcript_outcome(events: &[TranscriptEvent]) -> Option<Result<SessionResult, SessionAbort>> {
    events.iter().rev().find_map(|e| match e {
        TranscriptEvent::Result(r) => Some(Ok((**r).clone())),
        TranscriptEvent::Abort { patient_id, reason } => {
            Some(Err(SessionAbort { patient_id: patient_id.clone(), reason: reason.clone() }))
        }
        _ => None,
    })
}

pub fn load_run(dir: &Path) -> Result<LoadedRun, RunError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(RunError::NotARun(dir.into()));
    }
    let text = std::fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| RunError::Transcript { path: manifest_path.clone(), message: e.to_string() })?;

    let mut results = Vec::new();
    let mut aborted = Vec::new();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("jsonl"))
        .collect();
    paths.sort();
    for path in paths {
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let events =
            parse_jsonl(&text).map_err(|e| RunError::Transcript { path: path.clone(), message: e.to_string() })?;
        match transcript_outcome(&events) {
            Some(Ok(r)) => results.push(r),
            Some(Err(a)) => aborted.push(a),
            None => {
                return Err(RunError::Transcript { path, message: "transcript has no result or abort marker".into() })
            }
        }
    }
    results.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    Ok(LoadedRun { manifest, results, aborted })
}
