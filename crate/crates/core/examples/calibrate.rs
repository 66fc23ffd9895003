//! Paired semantic-on/off runs on a testbed target.
//!
//! `cargo run --release --example calibrate -- <target> <pairs> <execs> [tau]`

use std::time::Duration;

use semfuzz::campaign::{run, CampaignConfig};

fn env(name: &str) -> Option<u64> {
    std::env::var(name).ok()?.parse().ok()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let target = args.get(1).map_or("miniq", String::as_str);
    let pairs: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5);
    let execs: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let tau: Option<f64> = args.get(4).and_then(|s| s.parse().ok());
    let arms: &[bool] = if tau.is_some() { &[false] } else { &[false, true] };
    for seed in 0..pairs {
        for &off in arms {
            let dir = tempfile::tempdir().unwrap();
            let mut c = CampaignConfig::testbed(target, dir.path()).unwrap();
            c.rng_seed = seed;
            c.exec_budget = Some(execs);
            c.time_budget = Duration::from_secs(600);
            c.semantic_off = off;
            if let Some(v) = env("FIT_LIMIT") {
                c.engine.fit_limit = v;
            }
            if let Some(v) = env("STRIDE") {
                c.engine.reject_stride = v;
            }
            if let Some(t) = tau {
                c.tau = t;
            }
            let s = run(c).unwrap();
            let found: Vec<String> = s
                .bugs
                .iter()
                .map(|b| format!("{}@{}", b.planted.as_deref().unwrap_or("?"), b.ttfb_execs))
                .collect();
            println!(
                "seed {seed} {} execs {} {:.1}s edges {} corpus {} novadm {} bugs [{}]",
                if off { "off" } else { "on " },
                s.executions,
                s.elapsed_secs,
                s.edges,
                s.corpus_size,
                s.novelty_admissions,
                found.join(" ")
            );
        }
    }
}
