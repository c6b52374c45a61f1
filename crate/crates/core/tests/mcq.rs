mod common;

use dynamicare::eval::mcq::{load_mcq_cases, run_mcq_benchmark};
use dynamicare::run::RunConfig;

#[test]
fn mcq_fixture_scores_seven_of_ten() {
    let cases = load_mcq_cases(&common::fixture("mcq/cases.jsonl")).unwrap();
    assert_eq!(cases.len(), 10);
    let config = RunConfig::from_toml(&std::fs::read_to_string(common::fixture("mcq/config.toml")).unwrap()).unwrap();
    let (report, runs) = run_mcq_benchmark(&cases, &config.session, &common::scripted("mcq/script.jsonl"));

    assert_eq!((report.n, report.correct), (10, 7));
    assert!((report.accuracy - 0.7).abs() < 1e-12);
    let wrong: Vec<(&str, Option<char>)> =
        report.per_case.iter().filter(|c| !c.correct).map(|c| (c.id.as_str(), c.predicted)).collect();
    assert_eq!(wrong, vec![("q03", Some('A')), ("q06", Some('D')), ("q09", None)]);
    assert!(runs[8].outcome.is_err(), "invalid letter after repair aborts");
    let asked: Vec<u32> = report.per_case.iter().map(|c| c.questions).collect();
    assert_eq!(asked, vec![0, 1, 0, 0, 1, 0, 0, 0, 0, 1]);
}
