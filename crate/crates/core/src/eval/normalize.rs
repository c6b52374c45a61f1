//! Diagnosis name → ICD-9 code mapping through a persistent TSV cache and an
//! ontology search service.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde_json::Value;

pub const TERM_URL_ENV: &str = "DYNAMICARE_TERM_URL";
pub const TERM_KEY_ENV: &str = "DYNAMICARE_TERM_KEY";
pub const DEFAULT_TERM_URL: &str = "https://data.bioontology.org";

/// Cache key: lower case with whitespace collapsed.
pub fn cache_key(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn diagnosis_notation() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:\d{3}(?:\.\d{1,2})?|V\d{2}(?:\.\d{1,2})?|E\d{3}(?:\.\d)?)$").expect("regex"))
}

/// Dot-free diagnosis code from an ontology notation such as "401.9";
/// procedure codes and chapter ranges yield `None`.
pub fn code_from_notation(notation: &str) -> Option<String> {
    let n = notation.trim().to_uppercase();
    diagnosis_notation().is_match(&n).then(|| n.replace('.', ""))
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("reading cache {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cache {path} line {line}: expected 'name<TAB>code'")]
    Format { path: PathBuf, line: usize },
}

/// `name<TAB>code` lines; an empty code records a name known to be unmappable.
#[derive(Debug, Default)]
pub struct NormalizationCache {
    entries: HashMap<String, Option<String>>,
    path: Option<PathBuf>,
}

impl NormalizationCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, CacheError> {
        Self::parse_at(text, None)
    }

    fn parse_at(text: &str, path: Option<PathBuf>) -> Result<Self, CacheError> {
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, code) = line
                .split_once('\t')
                .ok_or_else(|| CacheError::Format { path: path.clone().unwrap_or_default(), line: i + 1 })?;
            let code = code.trim();
            entries.insert(cache_key(name), (!code.is_empty()).then(|| code.to_string()));
        }
        Ok(Self { entries, path })
    }

    /// Opens (or starts) the cache file at `path`; new entries are appended to it.
    pub fn open(path: &Path) -> Result<Self, CacheError> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(source) => return Err(CacheError::Io { path: path.into(), source }),
        };
        Self::parse_at(&text, Some(path.into()))
    }

    /// `Some(Some(code))` mapped, `Some(None)` known unmappable, `None` miss.
    pub fn get(&self, name: &str) -> Option<Option<String>> {
        self.entries.get(&cache_key(name)).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, name: &str, code: Option<String>) -> std::io::Result<()> {
        let key = cache_key(name);
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(f, "{key}\t{}", code.as_deref().unwrap_or(""))?;
            f.flush()?;
        }
        self.entries.insert(key, code);
        Ok(())
    }
}

/// Ontology search restricted to ICD-9-CM.
pub trait TerminologyService: Send + Sync {
    /// The top diagnosis code for `name`, `Ok(None)` when nothing matches.
    fn search_icd9(&self, name: &str) -> Result<Option<String>, String>;
}

/// Client for a BioPortal-style `/search` endpoint.
pub struct OntologySearchClient {
    base_url: String,
    api_key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for OntologySearchClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OntologySearchClient").field("base_url", &self.base_url).finish_non_exhaustive()
    }
}

impl OntologySearchClient {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self { base_url: base_url.into().trim_end_matches('/').to_string(), api_key: api_key.into(), agent }
    }

    /// Reads the credential (and an optional endpoint override) from the
    /// environment; `None` without a credential.
    pub fn from_env() -> Option<Self> {
        let key = std::env::var(TERM_KEY_ENV).ok().filter(|k| !k.trim().is_empty())?;
        let url = std::env::var(TERM_URL_ENV).unwrap_or_else(|_| DEFAULT_TERM_URL.into());
        Some(Self::new(url, key))
    }
}

/// First diagnosis-shaped code among the search hits.
pub fn code_from_search_response(body: &Value) -> Option<String> {
    body.get("collection")?.as_array()?.iter().find_map(|hit| {
        let notation = hit.get("notation").and_then(Value::as_str).map(str::to_string).or_else(|| {
            hit.get("@id").and_then(Value::as_str).and_then(|id| id.rsplit('/').next()).map(str::to_string)
        })?;
        code_from_notation(&notation)
    })
}

impl TerminologyService for OntologySearchClient {
    fn search_icd9(&self, name: &str) -> Result<Option<String>, String> {
        let url = format!("{}/search", self.base_url);
        let mut resp = self
            .agent
            .get(&url)
            .query("q", name)
            .query("ontologies", "ICD9CM")
            .query("include", "prefLabel,notation")
            .query("pagesize", "5")
            .header("Authorization", &format!("apikey token={}", self.api_key))
            .call()
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        if status != 200 {
            return Err(format!("terminology service returned HTTP {status}"));
        }
        let body: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        Ok(code_from_search_response(&body))
    }
}

/// Cache-first normalizer. Service failures on a cache miss yield `None`
/// (unmapped) and a warning; they never abort evaluation.
pub struct Normalizer {
    cache: Mutex<NormalizationCache>,
    service: Option<Box<dyn TerminologyService>>,
    service_calls: AtomicUsize,
    warnings: Mutex<Vec<String>>,
}

impl std::fmt::Debug for Normalizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Normalizer").field("has_service", &self.service.is_some()).finish_non_exhaustive()
    }
}

impl Normalizer {
    pub fn new(cache: NormalizationCache, service: Option<Box<dyn TerminologyService>>) -> Self {
        Self { cache: Mutex::new(cache), service, service_calls: AtomicUsize::new(0), warnings: Mutex::new(Vec::new()) }
    }

    pub fn service_calls(&self) -> usize {
        self.service_calls.load(Ordering::SeqCst)
    }

    pub fn warnings(&self) -> Vec<String> {
        self.warnings.lock().expect("warnings lock").clone()
    }

    fn warn(&self, message: String) {
        tracing::warn!("{message}");
        self.warnings.lock().expect("warnings lock").push(message);
    }

    /// The raw ICD-9 code for `name`, or `None` when unmapped.
    pub fn normalize(&self, name: &str) -> Option<String> {
        if name.trim().is_empty() {
            return None;
        }
        let mut cache = self.cache.lock().expect("cache lock");
        if let Some(hit) = cache.get(name) {
            return hit;
        }
        let Some(service) = &self.service else {
            drop(cache);
            self.warn(format!("no cached code for '{}' and no terminology service configured", name.trim()));
            return None;
        };
        self.service_calls.fetch_add(1, Ordering::SeqCst);
        match service.search_icd9(name.trim()) {
            Ok(code) => {
                if let Err(e) = cache.insert(name, code.clone()) {
                    drop(cache);
                    self.warn(format!("could not persist cache entry for '{}': {e}", name.trim()));
                }
                code
            }
            Err(e) => {
                drop(cache);
                self.warn(format!("terminology lookup failed for '{}': {e}", name.trim()));
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    struct Fixed(Result<Option<String>, String>);

    impl TerminologyService for Fixed {
        fn search_icd9(&self, _: &str) -> Result<Option<String>, String> {
            self.0.clone()
        }
    }

    #[test]
    fn notations() {
        assert_eq!(code_from_notation("401.9").as_deref(), Some("4019"));
        assert_eq!(code_from_notation("V45.11").as_deref(), Some("V4511"));
        assert_eq!(code_from_notation("E878.2").as_deref(), Some("E8782"));
        assert_eq!(code_from_notation("88.72"), None);
        assert_eq!(code_from_notation("390-459.99"), None);
    }

    #[test]
    fn search_response_skips_non_diagnosis_hits() {
        let body = json!({"collection": [
            {"prefLabel": "Diagnostic ultrasound of heart", "notation": "88.72"},
            {"prefLabel": "Unspecified essential hypertension", "@id": "http://purl.bioontology.org/ontology/ICD9CM/401.9"}
        ]});
        assert_eq!(code_from_search_response(&body).as_deref(), Some("4019"));
        assert_eq!(code_from_search_response(&json!({"collection": []})), None);
    }

    #[test]
    fn cache_hit_avoids_second_call() {
        let n = Normalizer::new(NormalizationCache::in_memory(), Some(Box::new(Fixed(Ok(Some("4019".into()))))));
        assert_eq!(n.normalize("Unspecified essential hypertension").as_deref(), Some("4019"));
        assert_eq!(n.normalize("  unspecified   ESSENTIAL hypertension ").as_deref(), Some("4019"));
        assert_eq!(n.service_calls(), 1);
        assert_eq!(n.normalize(""), None);
    }

    #[test]
    fn service_failure_is_unmapped_and_not_cached() {
        let n = Normalizer::new(NormalizationCache::in_memory(), Some(Box::new(Fixed(Err("down".into())))));
        assert_eq!(n.normalize("Sepsis"), None);
        assert_eq!(n.normalize("Sepsis"), None);
        assert_eq!(n.service_calls(), 2);
        assert_eq!(n.warnings().len(), 2);
    }

    #[test]
    fn cache_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.tsv");
        std::fs::write(&path, "# comment\nacute kidney failure\t5849\nvibes\t\n").unwrap();
        let mut c = NormalizationCache::open(&path).unwrap();
        assert_eq!(c.get("Acute Kidney Failure"), Some(Some("5849".into())));
        assert_eq!(c.get("vibes"), Some(None));
        assert_eq!(c.get("other"), None);
        c.insert("Pneumonia", Some("486".into())).unwrap();
        let reopened = NormalizationCache::open(&path).unwrap();
        assert_eq!(reopened.get("pneumonia"), Some(Some("486".into())));
        assert!(NormalizationCache::parse("no tab here").is_err());
    }
}
