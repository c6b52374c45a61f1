//! ICD-9 categories and ranked-retrieval metrics.

use std::collections::HashSet;

use crate::record::is_icd9_code;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("'{0}' is not a valid ICD-9 diagnosis code")]
pub struct MalformedCode(pub String);

/// Category of a dot-free ICD-9 code: first 3 digits for numeric codes,
/// "V" + 2 digits, "E" + 3 digits.
pub fn category_of(code: &str) -> Result<String, MalformedCode> {
    let code = code.trim();
    if !is_icd9_code(code) {
        return Err(MalformedCode(code.to_string()));
    }
    let len = match code.as_bytes()[0] {
        b'V' => 3,
        b'E' => 4,
        _ => 3,
    };
    Ok(code[..len].to_string())
}

/// True when both codes fall in the same category.
pub fn same_category(a: &str, b: &str) -> Result<bool, MalformedCode> {
    Ok(category_of(a)? == category_of(b)?)
}

/// 1 when any of the first `k` predicted categories is a truth category.
/// `None` entries are unmapped predictions; they occupy a rank but never match.
pub fn hit_at_k(predicted: &[Option<String>], truth: &HashSet<String>, k: usize) -> u8 {
    u8::from(predicted.iter().take(k).flatten().any(|c| truth.contains(c)))
}

/// Fraction of distinct truth categories present in the first `k` predictions.
pub fn recall_at_k(predicted: &[Option<String>], truth: &HashSet<String>, k: usize) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let found: HashSet<&String> = predicted.iter().take(k).flatten().filter(|c| truth.contains(*c)).collect();
    found.len() as f64 / truth.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(items: &[&str]) -> HashSet<String> {
        items.iter().map(|x| x.to_string()).collect()
    }

    fn p(items: &[Option<&str>]) -> Vec<Option<String>> {
        items.iter().map(|x| x.map(str::to_string)).collect()
    }

    #[test]
    fn categories() {
        assert_eq!(category_of("4019").unwrap(), "401");
        assert_eq!(category_of("4280").unwrap(), "428");
        assert_eq!(category_of("V4511").unwrap(), "V45");
        assert_eq!(category_of("E8782").unwrap(), "E878");
        assert!(same_category("4280", "42822").unwrap());
        assert!(category_of("401.9").is_err());
        assert!(category_of("").is_err());
    }

    #[test]
    fn rank_boundary() {
        let preds = p(&[Some("401"), None, Some("250"), Some("272"), Some("585"), Some("428")]);
        let truth = s(&["428"]);
        assert_eq!(hit_at_k(&preds, &truth, 5), 0);
        assert_eq!(hit_at_k(&preds, &truth, 10), 1);
    }

    #[test]
    fn recall_counts_distinct() {
        let preds = p(&[Some("428"), Some("428"), None]);
        assert_eq!(recall_at_k(&preds, &s(&["401", "428"]), 5), 0.5);
        assert_eq!(recall_at_k(&p(&[Some("401"), Some("428")]), &s(&["401", "428"]), 5), 1.0);
    }
}
