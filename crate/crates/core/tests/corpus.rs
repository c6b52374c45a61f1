mod common;

use dynamicare::eval::{aggregate, NormalizationCache, Normalizer};
use dynamicare::run::{execute_run, load_records, load_run, truth_table, RunConfig, RunOptions};
use serde_json::Value;

const TOL: f64 = 1e-9;

fn expected() -> Value {
    serde_json::from_str(&std::fs::read_to_string(common::fixture("corpus20/expected.json")).unwrap()).unwrap()
}

fn category(code: &str) -> String {
    let n = if code.starts_with('E') { 4 } else { 3 };
    code[..n].to_string()
}

/// Direct count over the ranked list, no shared code with the library.
fn brute(predicted: &[Option<String>], truth: &[String], k: usize) -> (f64, f64) {
    let mut distinct: Vec<&String> = Vec::new();
    for t in truth {
        if !distinct.contains(&t) {
            distinct.push(t);
        }
    }
    let mut found = 0;
    for t in &distinct {
        let mut seen = false;
        for p in predicted.iter().take(k) {
            if p.as_ref() == Some(*t) {
                seen = true;
            }
        }
        if seen {
            found += 1;
        }
    }
    (if found > 0 { 1.0 } else { 0.0 }, found as f64 / distinct.len() as f64)
}

#[test]
fn corpus_run_matches_expected_metrics() {
    let records = load_records(&common::fixture("corpus20/records")).unwrap();
    assert_eq!(records.len(), 20);
    let config_text = std::fs::read_to_string(common::fixture("corpus20/config.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let options = RunOptions {
        run_dir: dir.path().join("run"),
        config: RunConfig::from_toml(&config_text).unwrap(),
        config_source: Some(config_text),
        backend: "scripted".into(),
        jobs: 4,
        force: false,
    };
    let manifest = execute_run(&records, &common::scripted("corpus20/script.jsonl"), &options).unwrap();
    assert_eq!((manifest.counts.completed, manifest.counts.aborted), (20, 0));

    let loaded = load_run(&options.run_dir).unwrap();
    assert_eq!(loaded.results.len(), 20);
    let cache_text = std::fs::read_to_string(common::fixture("corpus20/cache.tsv")).unwrap();
    let normalizer = Normalizer::new(NormalizationCache::parse(&cache_text).unwrap(), None);
    let report = aggregate(&loaded.results, &truth_table(&records), &normalizer, 0).unwrap();

    let exp = expected();
    let agg = &exp["aggregate"];
    let close = |a: f64, b: &Value| (a - b.as_f64().unwrap()).abs() < TOL;
    assert!(close(report.aggregate.hit5, &agg["Hit@5"]));
    assert!(close(report.aggregate.hit10, &agg["Hit@10"]));
    assert!(close(report.aggregate.rec5, &agg["Rec@5"]));
    assert!(close(report.aggregate.rec10, &agg["Rec@10"]));
    assert!(close(report.aggregate.ave_q, &agg["Ave-Q"]));
    assert_eq!(report.aggregate.n, 20);

    for (got, want) in report.per_patient.iter().zip(exp["patients"].as_array().unwrap()) {
        assert_eq!(got.patient_id, want["patient_id"].as_str().unwrap());
        assert_eq!(u64::from(got.hit5), want["hit@5"].as_u64().unwrap(), "{}", got.patient_id);
        assert_eq!(u64::from(got.hit10), want["hit@10"].as_u64().unwrap(), "{}", got.patient_id);
        assert!(close(got.rec5, &want["rec@5"]), "{}", got.patient_id);
        assert!(close(got.rec10, &want["rec@10"]), "{}", got.patient_id);
        assert_eq!(u64::from(got.questions), want["questions"].as_u64().unwrap());
        let want_cats: Vec<Option<String>> =
            want["predicted_categories"].as_array().unwrap().iter().map(|v| v.as_str().map(str::to_string)).collect();
        assert_eq!(got.predicted_categories, want_cats, "{}", got.patient_id);

        let truth: Vec<String> =
            want["truth_codes"].as_array().unwrap().iter().map(|c| category(c.as_str().unwrap())).collect();
        for (k, hit, rec) in [(5, got.hit5, got.rec5), (10, got.hit10, got.rec10)] {
            let (bh, br) = brute(&got.predicted_categories, &truth, k);
            assert_eq!(f64::from(hit), bh);
            assert!((rec - br).abs() < TOL);
        }
    }

    let instances: usize = report.per_chapter.iter().map(|c| c.sample_size).sum();
    assert_eq!(instances as u64, exp["truth_instances"].as_u64().unwrap());
}
