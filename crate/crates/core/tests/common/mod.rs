#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use dynamicare::gateway::{Gateway, ScriptedBackend};
use dynamicare::record::PatientRecord;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

pub fn scripted(rel: &str) -> Gateway {
    Gateway::new(Arc::new(ScriptedBackend::from_path(&fixture(rel)).expect("script loads")))
}

pub fn record(rel: &str) -> PatientRecord {
    let text = std::fs::read_to_string(fixture(rel)).expect("record readable");
    PatientRecord::from_json_str(&text).expect("record validates").record
}

/// Compares `actual` with a checked-in golden file. With `DYNAMICARE_BLESS=1`
/// the golden file is rewritten instead.
pub fn assert_golden(rel: &str, actual: &str) {
    let path = fixture(rel);
    if std::env::var("DYNAMICARE_BLESS").as_deref() == Ok("1") {
        std::fs::write(&path, actual).expect("write golden");
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    if expected != actual {
        let line = expected.lines().zip(actual.lines()).position(|(a, b)| a != b);
        panic!("{} differs from output (first differing line: {line:?})", path.display());
    }
}
