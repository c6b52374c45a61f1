//! Patient system: keyword routing to record sections, then a patient-voice
//! answer, with a redacted-record fallback.

use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::gateway::{CallKey, ChatRequest, Gateway, GatewayError, CATEGORICAL_TEMPERATURE};
use crate::prompts::{PATIENT_ANSWER, PATIENT_FALLBACK};
use crate::record::{
    redact_for_fallback, render_initial_presentation, value_to_text, PatientRecord, ADMISSION_INFO, DIAGNOSES,
};
use crate::visit::AnswerStage;

/// Stage-1 reply meaning "the excerpt cannot answer this".
pub const NO_ANSWER: &str = "[NO_ANSWER]";
/// Used when the fallback model returns nothing.
pub const UNKNOWN_ANSWER: &str = "I don't know.";

const DEFAULT_MAPPING: &str = include_str!("../config/keyword_mapping.toml");

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Target {
    /// Top-level section, or a nested path joined with '.'.
    pub section: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subfield: Option<String>,
}

impl Target {
    pub fn new(section: &str, subfield: Option<&str>) -> Self {
        Self { section: section.into(), subfield: subfield.map(Into::into) }
    }

    pub fn label(&self) -> String {
        match &self.subfield {
            Some(f) => format!("{}.{f}", self.section),
            None => self.section.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingEntry {
    pub keywords: Vec<String>,
    pub targets: Vec<Target>,
    #[serde(default)]
    pub extension: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum MappingError {
    #[error("keyword mapping is not valid TOML: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("reading keyword mapping {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("entry {index}: {message}")]
    Invalid { index: usize, message: String },
}

#[derive(Debug, Deserialize)]
struct MappingFile {
    #[serde(default)]
    entry: Vec<MappingEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordMapping {
    entries: Vec<MappingEntry>,
    longest_phrase: usize,
}

impl KeywordMapping {
    /// The shipped dictionary.
    pub fn shipped() -> &'static KeywordMapping {
        static SHIPPED: OnceLock<KeywordMapping> = OnceLock::new();
        SHIPPED.get_or_init(|| Self::from_toml(DEFAULT_MAPPING).expect("shipped keyword mapping is valid"))
    }

    pub fn from_path(path: &Path) -> Result<Self, MappingError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| MappingError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, MappingError> {
        let file: MappingFile = toml::from_str(text)?;
        Self::new(file.entry)
    }

    pub fn new(entries: Vec<MappingEntry>) -> Result<Self, MappingError> {
        let mut seen = HashSet::new();
        for (index, e) in entries.iter().enumerate() {
            let invalid = |message: String| MappingError::Invalid { index, message };
            if e.keywords.is_empty() || e.targets.is_empty() {
                return Err(invalid("needs at least one keyword and one target".into()));
            }
            for k in &e.keywords {
                if k.trim().is_empty() || *k != k.to_lowercase() {
                    return Err(invalid(format!("keyword '{k}' must be non-empty lower case")));
                }
                if !seen.insert(k.clone()) {
                    return Err(invalid(format!("keyword '{k}' appears in more than one entry")));
                }
            }
            for t in &e.targets {
                let top = t.section.split('.').next().unwrap_or_default();
                if top == DIAGNOSES || top == ADMISSION_INFO {
                    return Err(invalid(format!("section '{}' may not be routed to", t.section)));
                }
            }
        }
        let longest_phrase =
            entries.iter().flat_map(|e| e.keywords.iter()).map(|k| k.split_whitespace().count()).max().unwrap_or(1);
        Ok(Self { entries, longest_phrase })
    }

    pub fn entries(&self) -> &[MappingEntry] {
        &self.entries
    }

    fn contains(&self, keyword: &str) -> bool {
        self.entries.iter().any(|e| e.keywords.iter().any(|k| k == keyword))
    }
}

fn word_regex() -> &'static Regex {
    static WORD: OnceLock<Regex> = OnceLock::new();
    WORD.get_or_init(|| Regex::new(r"[a-z0-9]+(?:[-'][a-z0-9]+)*").expect("valid regex"))
}

/// Lower-cased tokens of `question`; dictionary phrases are matched longest
/// first and emitted as single keywords. Plural words fall back to their
/// singular form when only that form is in the dictionary.
pub fn extract_keywords(question: &str, mapping: &KeywordMapping) -> Vec<String> {
    let lower = question.to_lowercase();
    let words: Vec<&str> = word_regex().find_iter(&lower).map(|m| m.as_str()).collect();
    let mut out = Vec::with_capacity(words.len());
    let mut i = 0;
    'outer: while i < words.len() {
        let max = mapping.longest_phrase.min(words.len() - i);
        for len in (2..=max).rev() {
            let phrase = words[i..i + len].join(" ");
            if mapping.contains(&phrase) {
                out.push(phrase);
                i += len;
                continue 'outer;
            }
        }
        out.push(singular_if_known(words[i], mapping));
        i += 1;
    }
    out
}

fn singular_if_known(word: &str, mapping: &KeywordMapping) -> String {
    if mapping.contains(word) {
        return word.to_string();
    }
    let candidates = [word.strip_suffix("ies").map(|s| format!("{s}y")), word.strip_suffix('s').map(str::to_string)];
    candidates.into_iter().flatten().find(|c| mapping.contains(c)).unwrap_or_else(|| word.to_string())
}

/// Union of the targets of every entry matched by `keywords`, in dictionary
/// order, without duplicates.
pub fn route_question(keywords: &[String], mapping: &KeywordMapping) -> Vec<Target> {
    let mut out: Vec<Target> = Vec::new();
    for e in &mapping.entries {
        if e.keywords.iter().any(|k| keywords.contains(k)) {
            for t in &e.targets {
                if !out.contains(t) {
                    out.push(t.clone());
                }
            }
        }
    }
    out
}

fn get_ci<'a>(map: &'a serde_json::Map<String, Value>, key: &str) -> Option<&'a Value> {
    map.get(key).or_else(|| map.iter().find(|(k, _)| k.eq_ignore_ascii_case(key)).map(|(_, v)| v))
}

fn is_empty_value(v: &Value) -> bool {
    match v {
        Value::Null => true,
        Value::String(s) => s.trim().is_empty(),
        Value::Array(a) => a.is_empty(),
        Value::Object(o) => o.is_empty(),
        _ => false,
    }
}

/// Looks up `target` in the record; `None` when absent or empty.
pub fn retrieve(record: &PatientRecord, target: &Target) -> Option<Value> {
    let sections = record.to_sections();
    let mut path = target.section.split('.');
    let mut current = get_ci(&sections, path.next()?)?;
    for part in path.chain(target.subfield.as_deref()) {
        current = get_ci(current.as_object()?, part)?;
    }
    (!is_empty_value(current)).then(|| current.clone())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientAnswer {
    pub text: String,
    pub stage: AnswerStage,
    pub matched_sections: Vec<String>,
    pub retrieved_snippet: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSettings {
    pub model: String,
    pub temperature: f64,
}

impl Default for PatientSettings {
    fn default() -> Self {
        Self { model: "gpt-4.1".into(), temperature: CATEGORICAL_TEMPERATURE }
    }
}

/// Something that can answer doctor questions within a session.
pub trait PatientResponder: Sync {
    /// Used as the session id in call keys and as the transcript file stem.
    fn patient_id(&self) -> &str;
    fn initial_presentation(&self) -> String;
    fn answer(&self, gateway: &Gateway, round: u32, question: &str) -> Result<PatientAnswer, GatewayError>;
}

/// A patient grounded in a structured record.
#[derive(Debug, Clone)]
pub struct RecordPatient<'a> {
    pub record: &'a PatientRecord,
    pub mapping: &'a KeywordMapping,
    pub settings: PatientSettings,
}

impl<'a> RecordPatient<'a> {
    pub fn new(record: &'a PatientRecord) -> Self {
        Self { record, mapping: KeywordMapping::shipped(), settings: PatientSettings::default() }
    }
}

fn request(settings: &PatientSettings, system: &str, user: String) -> ChatRequest {
    ChatRequest::new(system, user).model(settings.model.clone()).temperature(settings.temperature)
}

fn fallback(
    gateway: &Gateway,
    settings: &PatientSettings,
    session: &str,
    round: u32,
    context_label: &str,
    context: String,
    question: &str,
) -> Result<PatientAnswer, GatewayError> {
    let key = CallKey::new(session, "patient_fallback", round);
    let user = format!("{context_label}:\n{context}\n\nDoctor's question: {question}");
    let reply = gateway.complete(&key, &request(settings, PATIENT_FALLBACK, user))?;
    let text = reply.trim();
    Ok(PatientAnswer {
        text: if text.is_empty() { UNKNOWN_ANSWER.into() } else { text.into() },
        stage: AnswerStage::Fallback,
        matched_sections: Vec::new(),
        retrieved_snippet: String::new(),
    })
}

/// Two-stage answer for `question` from `record`.
pub fn answer_question(
    gateway: &Gateway,
    session: &str,
    round: u32,
    question: &str,
    record: &PatientRecord,
    mapping: &KeywordMapping,
    settings: &PatientSettings,
) -> Result<PatientAnswer, GatewayError> {
    let targets = route_question(&extract_keywords(question, mapping), mapping);
    let mut matched = Vec::new();
    let mut snippet = String::new();
    for t in &targets {
        if let Some(v) = retrieve(record, t) {
            let label = t.label();
            snippet.push_str(&format!("{label}:\n{}\n\n", value_to_text(&v)));
            matched.push(label);
        }
    }
    let snippet = snippet.trim_end().to_string();

    if !matched.is_empty() {
        let key = CallKey::new(session, "patient_answer", round);
        let user = format!("Record excerpt:\n{snippet}\n\nDoctor's question: {question}");
        let reply = gateway.complete(&key, &request(settings, PATIENT_ANSWER, user))?;
        let text = reply.trim();
        if !text.is_empty() && !text.contains(NO_ANSWER) {
            return Ok(PatientAnswer {
                text: text.to_string(),
                stage: AnswerStage::MatchedSection,
                matched_sections: matched,
                retrieved_snippet: snippet,
            });
        }
    }
    let redacted = redact_for_fallback(record).to_json_pretty();
    fallback(gateway, settings, session, round, "Medical record (JSON)", redacted, question)
}

impl PatientResponder for RecordPatient<'_> {
    fn patient_id(&self) -> &str {
        self.record.patient_id()
    }

    fn initial_presentation(&self) -> String {
        render_initial_presentation(self.record)
    }

    fn answer(&self, gateway: &Gateway, round: u32, question: &str) -> Result<PatientAnswer, GatewayError> {
        answer_question(gateway, self.patient_id(), round, question, self.record, self.mapping, &self.settings)
    }
}

/// A patient described by free-text case context, as in multiple-choice
/// benchmarks. Every answer comes from the context via the fallback prompt.
#[derive(Debug, Clone)]
pub struct ContextPatient<'a> {
    pub id: &'a str,
    pub presentation: String,
    pub context: &'a str,
    pub settings: PatientSettings,
}

impl PatientResponder for ContextPatient<'_> {
    fn patient_id(&self) -> &str {
        self.id
    }

    fn initial_presentation(&self) -> String {
        self.presentation.clone()
    }

    fn answer(&self, gateway: &Gateway, round: u32, question: &str) -> Result<PatientAnswer, GatewayError> {
        fallback(gateway, &self.settings, self.id, round, "Patient information", self.context.to_string(), question)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedBackend;
    use crate::record::tests::appendix_record;
    use crate::transcript::{Transcript, TranscriptEvent};
    use serde_json::json;
    use std::sync::Arc;

    fn kw(q: &str) -> Vec<String> {
        extract_keywords(q, KeywordMapping::shipped())
    }

    fn route(q: &str) -> Vec<Target> {
        route_question(&kw(q), KeywordMapping::shipped())
    }

    #[test]
    fn keywords_and_phrases() {
        assert!(kw("Do you have any allergies?").contains(&"allergies".to_string()));
        assert!(kw("What is your past medical history?").contains(&"past medical history".to_string()));
        assert!(kw("???").is_empty());
        assert!(kw("Any prior surgeries?").contains(&"surgery".to_string()));
        assert!(kw("Did you get a chest X-ray?").contains(&"x-ray".to_string()));
    }

    #[test]
    fn routing_examples() {
        assert_eq!(
            route("Any surgery before?"),
            vec![Target::new("Procedure", None), Target::new("Major Surgical or Invasive Procedure", None)]
        );
        assert_eq!(route("Do you keep smoking?"), vec![Target::new("Social History", None)]);
        assert!(route("How is the weather?").is_empty());
    }

    #[test]
    fn shipped_dictionary_rejects_bad_targets() {
        let bad = "[[entry]]\nkeywords = [\"diagnosis\"]\ntargets = [{ section = \"Diagnoses\" }]\n";
        assert!(matches!(KeywordMapping::from_toml(bad), Err(MappingError::Invalid { .. })));
        let dup = "[[entry]]\nkeywords = [\"a\"]\ntargets = [{ section = \"ECG\" }]\n\
                   [[entry]]\nkeywords = [\"a\"]\ntargets = [{ section = \"Echo\" }]\n";
        assert!(KeywordMapping::from_toml(dup).is_err());
        assert!(KeywordMapping::shipped().entries().iter().any(|e| e.extension));
    }

    #[test]
    fn nested_retrieval() {
        let r = appendix_record();
        let heent = retrieve(&r, &Target::new("Physical Exam.Admission", Some("HEENT"))).unwrap();
        assert!(heent.as_str().unwrap().contains("NCAT"));
        assert!(retrieve(&r, &Target::new("Family History", Some("missing"))).is_none());
    }

    fn gateway(lines: &[serde_json::Value]) -> (Gateway, Arc<Transcript>) {
        let text = lines.iter().map(|l| l.to_string()).collect::<Vec<_>>().join("\n");
        let t = Arc::new(Transcript::new());
        (Gateway::new(Arc::new(ScriptedBackend::from_jsonl(&text).unwrap())).recording(Arc::clone(&t)), t)
    }

    #[test]
    fn matched_section_answer_sees_only_the_snippet() {
        let (g, t) = gateway(&[json!({"session":"10001","role":"patient_answer","round":1,"attempt":0,
            "reply":"No, I have No Known Allergies / Adverse Drug Reactions."})]);
        let record = appendix_record();
        let a = RecordPatient::new(&record).answer(&g, 1, "Do you have any allergies?").unwrap();
        assert_eq!(a.stage, AnswerStage::MatchedSection);
        assert!(a.text.contains("No Known Allergies"));
        assert_eq!(a.matched_sections, vec!["Allergies"]);
        let prompt = t
            .events()
            .into_iter()
            .find_map(|e| match e {
                TranscriptEvent::Prompt { user, .. } => Some(user),
                _ => None,
            })
            .unwrap();
        assert!(!prompt.contains("Hypertension NOS"));
        assert!(!prompt.contains("Chief Complaint"));
    }

    #[test]
    fn sentinel_triggers_redacted_fallback() {
        let (g, t) = gateway(&[
            json!({"session":"10001","role":"patient_answer","round":2,"attempt":0,"reply":"[NO_ANSWER]"}),
            json!({"session":"10001","role":"patient_fallback","round":2,"attempt":0,"reply":"I think it was fine."}),
        ]);
        let record = appendix_record();
        let a = RecordPatient::new(&record).answer(&g, 2, "Any allergy to contrast?").unwrap();
        assert_eq!(a.stage, AnswerStage::Fallback);
        let fallback_context = t
            .events()
            .into_iter()
            .filter_map(|e| match e {
                TranscriptEvent::Prompt { role, user, .. } if role == "patient_fallback" => Some(user),
                _ => None,
            })
            .next()
            .unwrap();
        for hidden in ["Admission_info", "Demographics", "Diagnoses", "Hypertension NOS"] {
            assert!(!fallback_context.contains(hidden), "{hidden} leaked");
        }
    }

    #[test]
    fn unmapped_question_falls_back() {
        let (g, _) = gateway(&[
            json!({"session":"10001","role":"patient_fallback","round":1,"attempt":0,"reply":"I don't know"}),
        ]);
        let record = appendix_record();
        let a = RecordPatient::new(&record).answer(&g, 1, "How is the weather?").unwrap();
        assert_eq!(
            a,
            PatientAnswer {
                text: "I don't know".into(),
                stage: AnswerStage::Fallback,
                matched_sections: vec![],
                retrieved_snippet: String::new(),
            }
        );
    }
}
