use std::path::Path;
use std::time::{Duration, Instant};

use semfuzz::campaign::{emit_report, run, Campaign, CampaignConfig, Mode};

fn config(target: &str, out: &Path, execs: u64) -> CampaignConfig {
    let mut c = CampaignConfig::testbed(target, out).unwrap();
    c.exec_budget = Some(execs);
    c.time_budget = Duration::from_secs(300);
    c.sample_every = 500;
    c
}

#[test]
fn snapshot_before_work_and_between_steps() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = Campaign::new(config("chunky", dir.path(), 5000)).unwrap();
    let s = c.snapshot();
    assert_eq!(s.executions, 0);
    assert_eq!(s.ttfb, None);
    c.step().unwrap();
    assert_eq!(c.snapshot(), c.snapshot());
}

#[test]
fn ttfb_latches_on_first_bug() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = Campaign::new(config("chunky", dir.path(), 60_000)).unwrap();
    let mut first = None;
    let mut last_bugs = 0;
    while !c.is_done() {
        c.step().unwrap();
        let s = c.snapshot();
        assert!(s.unique_bugs >= last_bugs);
        last_bugs = s.unique_bugs;
        assert_eq!(s.ttfb.is_some(), s.unique_bugs >= 1);
        match (first, s.ttfb_execs) {
            (None, Some(t)) => first = Some(t),
            (Some(f), t) => assert_eq!(Some(f), t),
            _ => {}
        }
    }
    assert!(first.is_some(), "chunky should yield a bug within 60k executions");
}

#[test]
fn one_second_budget_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config("miniq", dir.path(), u64::MAX);
    c.exec_budget = None;
    c.time_budget = Duration::from_secs(1);
    let t0 = Instant::now();
    let stats = run(c).unwrap();
    assert!(t0.elapsed() < Duration::from_millis(1500), "{:?}", t0.elapsed());
    assert!(stats.executions > 0);
}

#[test]
fn semantic_off_leaves_no_scores_anywhere() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config("dissect", dir.path(), 4000);
    c.semantic_off = true;
    run(c).unwrap();
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(report.lines().skip(1).all(|l| l.split(',').nth(3) == Some("na")));
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(!summary.contains("novelty"));
    for role in ["master", "helper"] {
        for f in std::fs::read_dir(dir.path().join("queue").join(role).join("queue")).unwrap() {
            let name = f.unwrap().file_name().into_string().unwrap();
            assert!(name.ends_with(",nov:na"), "{name}");
            assert!(!name.contains("adm:novelty") && !name.contains("adm:both"), "{name}");
        }
    }
}

#[test]
fn report_columns_and_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let stats = run(config("miniq", dir.path(), 6000)).unwrap();
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("time,execs,edges,mean_novelty,unique_bugs"));
    let mut prev_t = -1.0;
    for l in lines {
        let f: Vec<&str> = l.split(',').collect();
        let t: f64 = f[0].parse().unwrap();
        assert!(t > prev_t);
        prev_t = t;
        let nov: f64 = f[3].parse().unwrap();
        assert!((0.0..=1.0).contains(&nov));
    }
    assert!(stats.mean_novelty_series.windows(2).all(|w| w[0].0 < w[1].0));
    assert!(stats.coverage_series.windows(2).all(|w| w[0].0 < w[1].0));
}

#[test]
fn zero_bug_run_has_header_only_bugs_csv() {
    let dir = tempfile::tempdir().unwrap();
    let stats = run(config("mathbench", dir.path(), 2000)).unwrap();
    assert_eq!(stats.unique_bugs, 0);
    assert_eq!(stats.ttfb, None);
    let bugs = std::fs::read_to_string(dir.path().join("bugs.csv")).unwrap();
    assert_eq!(bugs.lines().count(), 1);
    // Re-emitting into another directory reproduces the same files.
    let other = tempfile::tempdir().unwrap();
    emit_report(&stats, other.path()).unwrap();
    assert_eq!(bugs, std::fs::read_to_string(other.path().join("bugs.csv")).unwrap());
}

#[test]
fn master_and_helper_processes_share_a_queue() {
    let dir = tempfile::tempdir().unwrap();
    let queue = dir.path().join("queue");
    let mut m = config("dissect", &dir.path().join("m"), 3000);
    m.mode = Mode::Master;
    m.queue_root = Some(queue.clone());
    m.sync_interval = Duration::ZERO;
    let mut h = config("dissect", &dir.path().join("h"), 3000);
    h.mode = Mode::Helper;
    h.queue_root = Some(queue.clone());
    h.sync_interval = Duration::ZERO;
    let hs = run(h).unwrap();
    let ms = run(m).unwrap();
    assert_eq!(hs.executions, 3000);
    assert_eq!(ms.executions, 3000);
    assert!(queue.join("master").join("queue").is_dir());
    assert!(queue.join("helper").join("queue").is_dir());
    assert_eq!(ms.llm_queries, 0);
}

#[test]
fn helper_mode_requires_queue_root() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config("miniq", dir.path(), 10);
    c.mode = Mode::Helper;
    let err = Campaign::new(c).err().unwrap();
    assert!(err.is_config());
}
