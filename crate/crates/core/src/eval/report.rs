//! Per-patient and aggregate metrics, the per-chapter breakdown, and their
//! plain-text tables.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{category_of, hit_at_k, recall_at_k};
use super::normalize::Normalizer;
use crate::record::GroundTruthDiagnosis;
use crate::workflow::SessionResult;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no completed sessions to evaluate")]
    Empty,
    #[error("no ground truth for patient {0}")]
    MissingTruth(String),
    #[error("patient {patient_id}: {message}")]
    BadTruth { patient_id: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientMetrics {
    pub patient_id: String,
    #[serde(rename = "hit@5")]
    pub hit5: u8,
    #[serde(rename = "hit@10")]
    pub hit10: u8,
    #[serde(rename = "rec@5")]
    pub rec5: f64,
    #[serde(rename = "rec@10")]
    pub rec10: f64,
    pub questions: u32,
    /// Category of each ranked prediction; `null` when unmapped.
    pub predicted_categories: Vec<Option<String>>,
    pub truth_categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    #[serde(rename = "Hit@5")]
    pub hit5: f64,
    #[serde(rename = "Hit@10")]
    pub hit10: f64,
    #[serde(rename = "Rec@5")]
    pub rec5: f64,
    #[serde(rename = "Rec@10")]
    pub rec10: f64,
    #[serde(rename = "Ave-Q")]
    pub ave_q: f64,
    pub n: usize,
    pub aborted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChapterMetrics {
    pub range: String,
    pub definition: String,
    /// `None` when the chapter has no instances.
    #[serde(rename = "Hit@5")]
    pub hit5: Option<f64>,
    #[serde(rename = "Hit@10")]
    pub hit10: Option<f64>,
    pub sample_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_patient: Vec<PatientMetrics>,
    pub aggregate: AggregateMetrics,
    pub per_chapter: Vec<ChapterMetrics>,
    pub warnings: Vec<String>,
}

/// ICD-9 chapters as (first category, last category, range label, title).
pub const CHAPTERS: [(u16, u16, &str, &str); 17] = [
    (1, 139, "001-139", "infectious and parasitic diseases"),
    (140, 239, "140-239", "neoplasms"),
    (240, 279, "240-279", "endocrine, nutritional and metabolic diseases, and immunity disorders"),
    (280, 289, "280-289", "diseases of the blood and blood-forming organs"),
    (290, 319, "290-319", "mental disorders"),
    (320, 389, "320-389", "diseases of the nervous system and sense organs"),
    (390, 459, "390-459", "diseases of the circulatory system"),
    (460, 519, "460-519", "diseases of the respiratory system"),
    (520, 579, "520-579", "diseases of the digestive system"),
    (580, 629, "580-629", "diseases of the genitourinary system"),
    (630, 679, "630-679", "complications of pregnancy, childbirth, and the puerperium"),
    (680, 709, "680-709", "diseases of the skin and subcutaneous tissue"),
    (710, 739, "710-739", "diseases of the musculoskeletal system and connective tissue"),
    (740, 759, "740-759", "congenital anomalies"),
    (760, 779, "760-779", "certain conditions originating in the perinatal period"),
    (780, 799, "780-799", "symptoms, signs, and ill-defined conditions"),
    (800, 999, "800-999", "injury and poisoning"),
];
pub const EV_RANGE: &str = "E and V codes";
const EV_TITLE: &str = "external causes of injury and supplementary classification";

/// Index into [`CHAPTERS`], or `CHAPTERS.len()` for E and V codes.
pub fn chapter_index(category: &str) -> Option<usize> {
    if category.starts_with(['E', 'V']) {
        return Some(CHAPTERS.len());
    }
    let n: u16 = category.parse().ok()?;
    CHAPTERS.iter().position(|(lo, hi, _, _)| (*lo..=*hi).contains(&n))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Scores completed sessions against their ground truth. `aborted` is only
/// reported; aborted sessions never enter the means.
pub fn aggregate(
    results: &[SessionResult],
    truths: &HashMap<String, Vec<GroundTruthDiagnosis>>,
    normalizer: &Normalizer,
    aborted: usize,
) -> Result<MetricReport, EvalError> {
    if results.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut warnings = Vec::new();
    let mut per_patient = Vec::with_capacity(results.len());
    // (instances, hits@5, hits@10) per chapter, E/V last.
    let mut chapters = vec![(0usize, 0usize, 0usize); CHAPTERS.len() + 1];

    for r in results {
        let truth = truths.get(&r.patient_id).ok_or_else(|| EvalError::MissingTruth(r.patient_id.clone()))?;
        let bad = |message: String| EvalError::BadTruth { patient_id: r.patient_id.clone(), message };
        let truth_cats: Vec<String> = truth
            .iter()
            .map(|d| category_of(&d.icd9_code).map_err(|e| bad(e.to_string())))
            .collect::<Result<_, _>>()?;
        if truth_cats.is_empty() {
            return Err(bad("no ground-truth diagnoses".into()));
        }
        let truth_set: HashSet<String> = truth_cats.iter().cloned().collect();

        let predicted: Vec<Option<String>> = r
            .final_diagnoses
            .iter()
            .map(|name| {
                let code = normalizer.normalize(name)?;
                match category_of(&code) {
                    Ok(c) => Some(c),
                    Err(e) => {
                        warnings.push(format!("patient {}: prediction '{name}' mapped to {e}", r.patient_id));
                        None
                    }
                }
            })
            .collect();

        for cat in &truth_cats {
            let idx = chapter_index(cat).ok_or_else(|| bad(format!("category {cat} outside every chapter")))?;
            let one = |k: usize| usize::from(predicted.iter().take(k).flatten().any(|p| p == cat));
            chapters[idx].0 += 1;
            chapters[idx].1 += one(5);
            chapters[idx].2 += one(10);
        }

        let mut distinct_truth: Vec<String> = truth_set.iter().cloned().collect();
        distinct_truth.sort();
        per_patient.push(PatientMetrics {
            patient_id: r.patient_id.clone(),
            hit5: hit_at_k(&predicted, &truth_set, 5),
            hit10: hit_at_k(&predicted, &truth_set, 10),
            rec5: recall_at_k(&predicted, &truth_set, 5),
            rec10: recall_at_k(&predicted, &truth_set, 10),
            questions: r.questions_asked,
            predicted_categories: predicted,
            truth_categories: distinct_truth,
        });
    }

    let aggregate = AggregateMetrics {
        hit5: mean(per_patient.iter().map(|p| f64::from(p.hit5))),
        hit10: mean(per_patient.iter().map(|p| f64::from(p.hit10))),
        rec5: mean(per_patient.iter().map(|p| p.rec5)),
        rec10: mean(per_patient.iter().map(|p| p.rec10)),
        ave_q: mean(per_patient.iter().map(|p| f64::from(p.questions))),
        n: per_patient.len(),
        aborted,
    };
    let per_chapter = chapters
        .iter()
        .enumerate()
        .map(|(i, &(n, h5, h10))| {
            let (range, definition) = CHAPTERS.get(i).map_or((EV_RANGE, EV_TITLE), |c| (c.2, c.3));
            let rate = |h: usize| (n > 0).then(|| h as f64 / n as f64);
            ChapterMetrics {
                range: range.into(),
                definition: definition.into(),
                hit5: rate(h5),
                hit10: rate(h10),
                sample_size: n,
            }
        })
        .collect();
    warnings.extend(normalizer.warnings());
    Ok(MetricReport { per_patient, aggregate, per_chapter, warnings })
}

/// Main results table: one row per (agent, model) pair, percentages with one
/// decimal and Ave-Q with two.
pub fn render_main_table(rows: &[(&str, &str, &AggregateMetrics)]) -> String {
    let mut out = format!(
        "{:<8} {:<14} {:>6} {:>7} {:>6} {:>7} {:>6}\n",
        "Agent", "Model", "Hit@5", "Hit@10", "Rec@5", "Rec@10", "Ave-Q"
    );
    for (agent, model, m) in rows {
        let _ = writeln!(
            out,
            "{:<8} {:<14} {:>6.1} {:>7.1} {:>6.1} {:>7.1} {:>6.2}",
            agent,
            model,
            m.hit5 * 100.0,
            m.hit10 * 100.0,
            m.rec5 * 100.0,
            m.rec10 * 100.0,
            m.ave_q
        );
    }
    out
}

/// Per-chapter table sorted by Hit@5 (descending, then Hit@10); empty
/// chapters last with "-".
pub fn render_chapter_table(rows: &[ChapterMetrics]) -> String {
    let mut sorted: Vec<&ChapterMetrics> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        let key = |c: &ChapterMetrics| (c.hit5.unwrap_or(-1.0), c.hit10.unwrap_or(-1.0));
        key(b).partial_cmp(&key(a)).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out =
        format!("{:<14} {:<70} {:>7} {:>7} {:>11}\n", "ICD-9 codes", "Definition", "Hit@5", "Hit@10", "Sample Size");
    let pct = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{:.2}", x * 100.0));
    for c in sorted {
        let _ = writeln!(
            out,
            "{:<14} {:<70} {:>7} {:>7} {:>11}",
            c.range,
            c.definition,
            pct(c.hit5),
            pct(c.hit10),
            c.sample_size
        );
    }
    out
}
