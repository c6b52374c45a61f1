//! Header-based section splitting for ECG, echo and radiology reports.

use std::sync::OnceLock;

use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Ecg,
    Echo,
    Radiology,
}

/// Recognized headers, longest alternatives first so that e.g.
/// "REASON FOR THIS EXAMINATION" wins over "REASON".
const HEADERS: [&str; 15] = [
    "REASON FOR THIS EXAMINATION",
    "PATIENT/TEST INFORMATION",
    "MEDICAL CONDITION",
    "CLINICAL HISTORY",
    "INTERPRETATION",
    "FINAL REPORT",
    "CONCLUSIONS",
    "IMPRESSION",
    "INDICATION",
    "COMPARISON",
    "TECHNIQUE",
    "FINDINGS",
    "HISTORY",
    "REASON",
    "CONCLUSION",
];

fn header_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let alternatives = HEADERS.iter().map(|h| regex::escape(h).replace(' ', r"[ \t]+")).collect::<Vec<_>>();
        // A header starts a line and is followed by a colon or the end of the line.
        let pattern = format!(r"(?im)^[ \t]*(?:UNDERLYING[ \t]+)?({})[ \t]*(?::|$)", alternatives.join("|"));
        Regex::new(&pattern).expect("header regex")
    })
}

fn canonical(header: &str) -> String {
    header.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Splits `text` on known headers. Keys are lower-case header names; text
/// before the first header goes under `body`. Empty sections are dropped and
/// repeated headers are concatenated.
pub fn extract_report_sections(text: &str, _kind: ReportKind) -> IndexMap<String, String> {
    let mut out: IndexMap<String, String> = IndexMap::new();
    let mut push = |key: String, chunk: &str| {
        let chunk = chunk.trim();
        if chunk.is_empty() {
            return;
        }
        out.entry(key)
            .and_modify(|v| {
                v.push('\n');
                v.push_str(chunk);
            })
            .or_insert_with(|| chunk.to_string());
    };
    let mut current = "body".to_string();
    let mut start = 0;
    for caps in header_regex().captures_iter(text) {
        let whole = caps.get(0).expect("match");
        push(current, &text[start..whole.start()]);
        current = canonical(&caps[1]);
        start = whole.end();
    }
    push(current, &text[start..]);
    out
}

/// Flattens sections back into text: body first and unlabeled, the rest as
/// `header: text` lines.
pub fn render_sections(sections: &IndexMap<String, String>) -> String {
    sections
        .iter()
        .map(|(k, v)| if k == "body" { v.clone() } else { format!("{k}: {v}") })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_headers() {
        let s = extract_report_sections(
            "INDICATION: chest pain.\nFINDINGS: clear lungs.\nIMPRESSION: no acute disease.",
            ReportKind::Radiology,
        );
        let expected: Vec<(&str, &str)> =
            vec![("indication", "chest pain."), ("findings", "clear lungs."), ("impression", "no acute disease.")];
        assert_eq!(s.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect::<Vec<_>>(), expected);
    }

    #[test]
    fn no_headers_is_body() {
        let text = "Sinus rhythm. Normal ECG.";
        let s = extract_report_sections(text, ReportKind::Ecg);
        assert_eq!(s.len(), 1);
        assert_eq!(s["body"], text);
        assert!(extract_report_sections("", ReportKind::Ecg).is_empty());
    }

    #[test]
    fn radiology_layout() {
        let text = "CHEST (PA & LAT)\n UNDERLYING MEDICAL CONDITION:\n  60 year old man with new dual chamber ppm\n \
                    REASON FOR THIS EXAMINATION:\n  Evaluate lead position\n                 FINAL REPORT\n \
                    HISTORY:  Pacemaker placement.\n\n FINDINGS:  Placement of a dual-channel pacer.\n";
        let s = extract_report_sections(text, ReportKind::Radiology);
        assert_eq!(s["body"], "CHEST (PA & LAT)");
        assert_eq!(s["medical condition"], "60 year old man with new dual chamber ppm");
        assert_eq!(s["reason for this examination"], "Evaluate lead position");
        assert_eq!(s["history"], "Pacemaker placement.");
        assert_eq!(s["findings"], "Placement of a dual-channel pacer.");
        assert!(!s.contains_key("final report"));
    }

    #[test]
    fn header_words_mid_line_are_text() {
        let s = extract_report_sections("No prior history: see chart", ReportKind::Echo);
        assert_eq!(s.keys().collect::<Vec<_>>(), vec!["body"]);
    }
}
