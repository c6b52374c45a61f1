//! Human rating sheets for patient answers and their scorer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::transcript::write_atomic;
use crate::workflow::SessionResult;

pub const ANNOTATORS: [&str; 3] = ["A", "B", "C"];
pub const SCALE_HEADER: &str =
    "# Rate each answer 0-2. truthfulness: 0 = contradicts the record, 1 = partly supported, 2 = fully supported. \
relevance: 0 = does not address the question, 1 = partly addresses it, 2 = directly answers it.";
const COLUMNS: [&str; 6] = ["patient_id", "round", "question", "answer", "truthfulness", "relevance"];

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("requested {requested} transcripts but only {available} are available")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path} row {row}: {message}")]
    Rating { path: PathBuf, row: usize, message: String },
    #[error("no annotation sheets found in {0}")]
    NoSheets(PathBuf),
}

pub fn sheet_path(dir: &Path, annotator: &str) -> PathBuf {
    dir.join(format!("annotator_{annotator}.csv"))
}

/// Samples `n` completed sessions (seeded shuffle, then sorted by id) and
/// writes one blank sheet per annotator. Returns the sampled patient ids.
pub fn export_annotation_sheets(
    results: &[SessionResult],
    n: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<String>, AnnotationError> {
    if n > results.len() {
        return Err(AnnotationError::SampleTooLarge { requested: n, available: results.len() });
    }
    let mut ordered: Vec<&SessionResult> = results.iter().collect();
    ordered.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    ordered.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ordered.truncate(n);
    ordered.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));

    let mut wtr = csv::Writer::from_writer(Vec::new());
    let csv_err = |source| AnnotationError::Csv { path: out_dir.into(), source };
    wtr.write_record(COLUMNS).map_err(csv_err)?;
    for r in &ordered {
        for turn in r.visit_log.turns() {
            wtr.write_record([r.patient_id.as_str(), &turn.round.to_string(), &turn.question, &turn.answer, "", ""])
                .map_err(csv_err)?;
        }
    }
    let body = wtr.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
    let mut sheet = format!("{SCALE_HEADER}\n").into_bytes();
    sheet.extend_from_slice(&body);

    std::fs::create_dir_all(out_dir).map_err(|source| AnnotationError::Io { path: out_dir.into(), source })?;
    for a in ANNOTATORS {
        let path = sheet_path(out_dir, a);
        write_atomic(&path, &sheet).map_err(|source| AnnotationError::Io { path, source })?;
    }
    Ok(ordered.iter().map(|r| r.patient_id.clone()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorScore {
    pub truthfulness: Option<f64>,
    pub relevance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationScores {
    pub per_annotator: BTreeMap<String, AnnotatorScore>,
    pub average: AnnotatorScore,
}

fn parse_rating(cell: &str) -> Result<Option<f64>, String> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    match cell.parse::<u8>() {
        Ok(v) if v <= 2 => Ok(Some(f64::from(v))),
        _ => Err(format!("rating '{cell}' is not 0, 1 or 2")),
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Mean of per-patient means over the filled cells of one sheet.
pub fn score_sheet(path: &Path) -> Result<AnnotatorScore, AnnotationError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|source| AnnotationError::Csv { path: path.into(), source })?;
    // patient → (truthfulness ratings, relevance ratings)
    let mut by_patient: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|source| AnnotationError::Csv { path: path.into(), source })?;
        let bad = |message| AnnotationError::Rating { path: path.into(), row: i + 1, message };
        let cell = |j: usize| row.get(j).unwrap_or_default();
        let entry = by_patient.entry(cell(0).to_string()).or_default();
        if let Some(v) = parse_rating(cell(4)).map_err(bad)? {
            entry.0.push(v);
        }
        if let Some(v) = parse_rating(cell(5)).map_err(bad)? {
            entry.1.push(v);
        }
    }
    Ok(AnnotatorScore {
        truthfulness: mean(by_patient.values().filter_map(|(t, _)| mean(t.iter().copied()))),
        relevance: mean(by_patient.values().filter_map(|(_, r)| mean(r.iter().copied()))),
    })
}

/// Scores every annotator sheet present in `dir`; the average is over
/// annotators with at least one rating.
pub fn score_annotation_sheets(dir: &Path) -> Result<AnnotationScores, AnnotationError> {
    let mut per_annotator = BTreeMap::new();
    for a in ANNOTATORS {
        let path = sheet_path(dir, a);
        if path.exists() {
            per_annotator.insert(a.to_string(), score_sheet(&path)?);
        }
    }
    if per_annotator.is_empty() {
        return Err(AnnotationError::NoSheets(dir.into()));
    }
    let average = AnnotatorScore {
        truthfulness: mean(per_annotator.values().filter_map(|s| s.truthfulness)),
        relevance: mean(per_annotator.values().filter_map(|s| s.relevance)),
    };
    Ok(AnnotationScores { per_annotator, average })
}

/// Rows Truthfulness/Relevance, columns A, B, C, Average.
pub fn render_annotation_table(scores: &AnnotationScores) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
    let mut out = format!("{:<14}", "Metric");
    for a in ANNOTATORS {
        out.push_str(&format!(" {a:>7}"));
    }
    out.push_str(&format!(" {:>7}\n", "Average"));
    for (label, pick) in [
        ("Truthfulness", (|s: &AnnotatorScore| s.truthfulness) as fn(&AnnotatorScore) -> Option<f64>),
        ("Relevance", |s: &AnnotatorScore| s.relevance),
    ] {
        out.push_str(&format!("{label:<14}"));
        for a in ANNOTATORS {
            out.push_str(&format!(" {:>7}", fmt(scores.per_annotator.get(a).and_then(pick))));
        }
        out.push_str(&format!(" {:>7}\n", fmt(pick(&scores.average))));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::visit::{AnswerStage, VisitLog};
    use crate::workflow::StopReason;

    fn result(id: &str, turns: usize) -> SessionResult {
        let mut log = VisitLog::new("Chest pain.");
        for i in 0..turns {
            log.append(&format!("Question {i} for {id}?"), "Yes.", AnswerStage::MatchedSection).unwrap();
        }
        SessionResult {
            patient_id: id.into(),
            final_diagnoses: vec!["Angina".into()],
            rounds_used: turns as u32 + 1,
            questions_asked: turns as u32,
            stop_reason: StopReason::Diagnosis,
            visit_log: log,
            team_history: vec![],
            violations: vec![],
        }
    }

    fn fill(path: &Path, value: &str) {
        let text = std::fs::read_to_string(path).unwrap();
        let filled: Vec<String> = text
            .lines()
            .enumerate()
            .map(|(i, l)| if i < 2 { l.to_string() } else { format!("{},{value},{value}", l.trim_end_matches(',')) })
            .collect();
        std::fs::write(path, filled.join("\n")).unwrap();
    }

    #[test]
    fn all_twos_average_two() {
        let dir = tempfile::tempdir().unwrap();
        let results: Vec<_> = (0..4).map(|i| result(&format!("p{i}"), 2)).collect();
        let ids = export_annotation_sheets(&results, 3, 7, dir.path()).unwrap();
        assert_eq!(ids.len(), 3);
        for a in ANNOTATORS {
            fill(&sheet_path(dir.path(), a), "2");
        }
        let scores = score_annotation_sheets(dir.path()).unwrap();
        assert_eq!(scores.average, AnnotatorScore { truthfulness: Some(2.0), relevance: Some(2.0) });
        let table = render_annotation_table(&scores);
        assert!(table.lines().next().unwrap().split_whitespace().eq(["Metric", "A", "B", "C", "Average"]));
        assert!(table.contains("Truthfulness") && table.contains("2.00"));
    }

    #[test]
    fn oversampling_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            export_annotation_sheets(&[result("p", 1)], 2, 0, dir.path()),
            Err(AnnotationError::SampleTooLarge { requested: 2, available: 1 })
        ));
    }

    #[test]
    fn sampling_is_seeded() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let results: Vec<_> = (0..100).map(|i| result(&format!("p{i:03}"), 1)).collect();
        let x = export_annotation_sheets(&results, 10, 42, a.path()).unwrap();
        let y = export_annotation_sheets(&results, 10, 42, b.path()).unwrap();
        assert_eq!(x, y);
        assert_eq!(
            std::fs::read(sheet_path(a.path(), "A")).unwrap(),
            std::fs::read(sheet_path(b.path(), "A")).unwrap()
        );
    }

    #[test]
    fn rejects_out_of_scale() {
        let dir = tempfile::tempdir().unwrap();
        export_annotation_sheets(&[result("p", 1)], 1, 0, dir.path()).unwrap();
        fill(&sheet_path(dir.path(), "A"), "3");
        assert!(matches!(score_annotation_sheets(dir.path()), Err(AnnotationError::Rating { .. })));
    }
}
