use super::*;

fn quick(target: &str, dir: &Path, execs: u64) -> CampaignConfig {
    let mut c = CampaignConfig::testbed(target, dir).unwrap();
    c.exec_budget = Some(execs);
    c.time_budget = Duration::from_secs(120);
    c.sample_every = 200;
    c
}

#[test]
fn config_validation() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = quick("miniq", dir.path(), 10);
    c.time_budget = Duration::ZERO;
    assert!(c.validate().unwrap_err().is_config());
    let mut c = quick("miniq", dir.path(), 10);
    c.tau = 1.5;
    assert!(c.validate().is_err());
    c.semantic_off = true;
    assert!(c.validate().is_ok());
    let mut c = quick("miniq", dir.path(), 10);
    c.mode = Mode::Helper;
    assert!(c.validate().is_err());
    assert!(CampaignConfig::testbed("nope", dir.path()).is_none());
}

#[test]
fn combined_run_respects_budget_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let stats = run(quick("dissect", dir.path(), 3000)).unwrap();
    assert_eq!(stats.executions, 3000);
    assert!(stats.edges > 0);
    assert!(stats.valid_input_rate.is_some());
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let times: Vec<f64> = report
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(!times.is_empty());
    assert!(times.windows(2).all(|w| w[0] < w[1]));
    assert!(dir.path().join("summary.txt").exists());
    let queues = dir.path().join("queue");
    assert!(queues.join(MASTER_ID).join("queue").is_dir());
    assert!(queues.join(HELPER_ID).join("queue").is_dir());
}

#[test]
fn semantic_off_reports_na() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = quick("miniq", dir.path(), 1000);
    c.semantic_off = true;
    let stats = run(c).unwrap();
    assert_eq!(stats.novelty_admissions, 0);
    assert!(stats.mean_novelty_series.is_empty());
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(report.lines().skip(1).all(|l| l.split(',').nth(3) == Some("na")));
}

#[test]
fn deterministic_under_exec_budget() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = run(quick("chunky", a.path(), 2000)).unwrap();
    let sb = run(quick("chunky", b.path(), 2000)).unwrap();
    assert_eq!(sa.edges, sb.edges);
    assert_eq!(sa.corpus_size, sb.corpus_size);
    let ba = std::fs::read_to_string(a.path().join("bugs.csv")).unwrap();
    let bb = std::fs::read_to_string(b.path().join("bugs.csv")).unwrap();
    assert_eq!(ba, bb);
}

#[test]
fn bugs_are_deduplicated_with_lineage() {
    let dir = tempfile::tempdir().unwrap();
    let stats = run(quick("chunky", dir.path(), 20_000)).unwrap();
    let ids: std::collections::BTreeSet<_> = stats.bugs.iter().map(|b| &b.bug_id).collect();
    assert_eq!(ids.len(), stats.bugs.len());
    for b in &stats.bugs {
        assert!(b.admission_path.ends_with("initial"), "{}", b.admission_path);
        assert!(dir.path().join("crashes").join(&b.bug_id).join("input.bin").exists());
    }
    let rows = read_bugs_csv(&std::fs::read_to_string(dir.path().join("bugs.csv")).unwrap());
    assert_eq!(rows.len(), stats.bugs.len());
}
