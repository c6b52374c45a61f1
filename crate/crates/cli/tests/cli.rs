use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn dynamicare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynamicare")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\nstderr: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
}

fn demo_run(run: &Path, force: bool) -> Output {
    let mut args = vec![
        "run",
        "--patients",
        path(&fixture("demo/records")).to_owned().leak(),
        "--config",
        path(&fixture("demo/config.toml")).to_owned().leak(),
        "--script",
        path(&fixture("demo/script.jsonl")).to_owned().leak(),
        "--out",
        path(run),
        "--jobs",
        "2",
    ];
    if force {
        args.push("--force");
    }
    dynamicare(&args)
}

fn jsonl_count(dir: &Path) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "jsonl"))
        .count()
}

#[test]
fn demo_run_evaluate_report() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    assert_ok(&demo_run(&run, false));
    assert_eq!(jsonl_count(&run), 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["counts"]["completed"], 3);
    assert_eq!(manifest["counts"]["aborted"], 0);
    assert!(manifest["finished_at"].is_string());
    assert!(run.join("config.toml").is_file());

    // each demo transcript is free of protocol violations
    for entry in std::fs::read_dir(&run).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|x| x == "jsonl") {
            let text = std::fs::read_to_string(&p).unwrap();
            assert!(!text.contains("\"event\":\"violation\""), "{}", p.display());
        }
    }

    let again = demo_run(&run, false);
    assert_eq!(again.status.code(), Some(1));
    assert_ok(&demo_run(&run, true));
    assert_eq!(jsonl_count(&run), 3);

    let cache = tmp.path().join("cache.tsv");
    std::fs::copy(fixture("demo/cache.tsv"), &cache).unwrap();
    let eval = dynamicare(&[
        "evaluate",
        "--run",
        path(&run),
        "--truth",
        path(&fixture("demo/records")),
        "--cache",
        path(&cache),
    ]);
    assert_ok(&eval);
    assert!(run.join("metrics.json").is_file());

    let report = dynamicare(&["report", "--run", path(&run)]);
    assert_ok(&report);
    let text = stdout(&report);
    let header: Vec<&str> = text.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["Agent", "Model", "Hit@5", "Hit@10", "Rec@5", "Rec@10", "Ave-Q"]);
    assert!(text.lines().nth(1).unwrap().starts_with("Multi"));
    assert!(text.contains("ICD-9 codes") && text.contains("Sample Size"));

    let sheets = tmp.path().join("sheets");
    assert_ok(&dynamicare(&[
        "export-annotations",
        "--run",
        path(&run),
        "--n",
        "2",
        "--seed",
        "1",
        "--out",
        path(&sheets),
    ]));
    for a in ["A", "B", "C"] {
        let sheet = std::fs::read_to_string(sheets.join(format!("annotator_{a}.csv"))).unwrap();
        assert!(sheet.starts_with('#'));
        assert!(sheet.lines().nth(1).unwrap().starts_with("patient_id,round,question,answer"));
    }
    let too_many = dynamicare(&["export-annotations", "--run", path(&run), "--n", "9", "--out", path(&sheets)]);
    assert_eq!(too_many.status.code(), Some(1));
}

#[test]
fn usage_and_missing_run_errors() {
    let unknown = dynamicare(&["run", "--no-such-flag"]);
    assert_eq!(unknown.status.code(), Some(2));

    let tmp = tempfile::tempdir().unwrap();
    let empty = dynamicare(&["evaluate", "--run", path(tmp.path()), "--truth", path(tmp.path())]);
    assert_eq!(empty.status.code(), Some(1));
    let report = dynamicare(&["report", "--run", path(tmp.path())]);
    assert_eq!(report.status.code(), Some(1));
}

#[test]
fn build_dataset_from_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("records");
    let o = dynamicare(&[
        "build-dataset",
        "--tables",
        path(&fixture("mimic/tables")),
        "--out",
        path(&out),
        "--n",
        "8",
        "--seed",
        "5",
        "--jobs",
        "2",
        "--script",
        path(&fixture("mimic/summary_script.jsonl")),
    ]);
    assert_ok(&o);
    let records = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            let p = e.as_ref().unwrap().path();
            p.extension().is_some_and(|x| x == "json") && p.file_name().unwrap() != "manifest.json"
        })
        .count();
    assert_eq!(records, 8);
}

#[test]
fn mcq_run_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("mcq");
    let o = dynamicare(&[
        "run",
        "--mcq",
        path(&fixture("mcq/cases.jsonl")),
        "--config",
        path(&fixture("mcq/config.toml")),
        "--script",
        path(&fixture("mcq/script.jsonl")),
        "--out",
        path(&run),
    ]);
    assert_ok(&o);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("mcq.json")).unwrap()).unwrap();
    assert_eq!(report["correct"], 7);
    let printed = dynamicare(&["report", "--run", path(&run)]);
    assert_ok(&printed);
    let text = stdout(&printed);
    assert!(text.contains("Accuracy") && text.contains("70.0"), "{text}");
}
