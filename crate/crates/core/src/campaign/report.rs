use std::fmt::Write as _;
use std::path::Path;

use super::{io_err, BugRecord, CampaignError, CampaignStats};
use crate::scheduler::Source;

const BUGS_HEADER: &str = "bug_id,ttfb_execs,found_by,admission_path,input_id,planted";

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "na".to_string(), |x| format!("{x:.prec$}"))
}

fn source_str(s: Source) -> &'static str {
    match s {
        Source::Master => "master",
        Source::Helper => "helper",
        Source::Initial => "initial",
    }
}

pub(crate) fn report_csv(stats: &CampaignStats) -> String {
    let mut out = String::from("time,execs,edges,mean_novelty,unique_bugs\n");
    for (i, &(t, edges)) in stats.coverage_series.iter().enumerate() {
        let nov = stats.mean_novelty_series.get(i).map(|&(_, n)| n);
        let _ = writeln!(
            out,
            "{t:.6},{},{edges},{},{}",
            stats.exec_series.get(i).copied().unwrap_or(0),
            if stats.semantic_off { "na".to_string() } else { opt(nov, 4) },
            stats.bugs_series.get(i).copied().unwrap_or(0),
        );
    }
    out
}

pub(crate) fn bugs_csv(bugs: &[BugRecord]) -> String {
    let mut out = format!("{BUGS_HEADER}\n");
    for b in bugs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            b.bug_id,
            b.ttfb_execs,
            source_str(b.found_by),
            b.admission_path,
            b.input_id,
            b.planted.as_deref().unwrap_or("")
        );
    }
    out
}

pub(crate) fn summary(stats: &CampaignStats) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "executions: {}", stats.executions);
    let _ = writeln!(s, "elapsed_secs: {:.3}", stats.elapsed_secs);
    let _ = writeln!(s, "execs_per_sec: {:.1}", stats.execs_per_sec);
    let _ = writeln!(s, "edges: {}", stats.edges);
    let _ = writeln!(s, "corpus_size: {}", stats.corpus_size);
    if !stats.semantic_off {
        let _ = writeln!(s, "novelty_admissions: {}", stats.novelty_admissions);
    }
    let _ = writeln!(s, "llm_queries: {}", stats.llm_queries);
    let _ = writeln!(s, "llm_queries_per_hour: {:.1}", stats.llm_queries_per_hour);
    let _ = writeln!(s, "generated_candidates: {}", stats.generated_candidates);
    let _ = writeln!(s, "valid_input_rate: {}", opt(stats.valid_input_rate, 4));
    let _ = writeln!(s, "retained_variance: {}", opt(stats.retained_variance, 4));
    let _ = writeln!(s, "unique_bugs: {}", stats.unique_bugs);
    let _ = writeln!(s, "ttfb_secs: {}", opt(stats.ttfb, 3));
    let _ = writeln!(
        s,
        "ttfb_execs: {}",
        stats.ttfb_execs.map_or_else(|| "na".to_string(), |x| x.to_string())
    );
    for b in &stats.bugs {
        let _ = writeln!(
            s,
            "bug: {} after {:.3}s / {} execs via {} [{}]",
            b.bug_id,
            b.ttfb_secs,
            b.ttfb_execs,
            b.admission_path,
            b.planted.as_deref().unwrap_or("unplanted")
        );
    }
    s
}

/// Writes `report.csv`, `bugs.csv` and `summary.txt` into `outdir`.
pub fn emit_report(stats: &CampaignStats, outdir: &Path) -> Result<(), CampaignError> {
    std::fs::create_dir_all(outdir).map_err(io_err(outdir))?;
    for (name, body) in [
        ("report.csv", report_csv(stats)),
        ("bugs.csv", bugs_csv(&stats.bugs)),
        ("summary.txt", summary(stats)),
    ] {
        let path = outdir.join(name);
        std::fs::write(&path, body).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Parses a `bugs.csv` back into `(bug_id, ttfb_execs, planted)` rows.
pub fn read_bugs_csv(text: &str) -> Vec<(String, u64, Option<String>)> {
    text.lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return None;
            }
            let planted = (!f[5].is_empty()).then(|| f[5].to_string());
            Some((f[0].to_string(), f[1].parse().ok()?, planted))
        })
        .collect()
}
