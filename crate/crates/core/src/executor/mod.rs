//! In-process execution of instrumented targets.
//!
//! A target is a plain function over the input bytes that reports its
//! control flow, runtime signals and guard violations through a [`Probe`].
//! [`execute`] runs one input and packages everything the fuzzer needs into
//! an [`ExecutionRecord`]; [`coverage_delta`] and [`dedup_crash`] turn records
//! into admission and triage decisions.

mod bitmap;
mod probe;

use std::fmt;
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

pub use bitmap::{bucket, CoverageBitmap, MAP_SIZE};
pub use probe::{block_id, Fault, Probe, Stop};

use crate::hash::{fnv1a64, Fnv64};
use crate::signals::RawSignals;

/// Number of innermost frames hashed into a [`BugId`].
pub const DEFAULT_STACK_DEPTH: usize = 5;

pub const EXIT_CRASH: i32 = 134;
pub const EXIT_TIMEOUT: i32 = 124;

pub type TargetFn = fn(&[u8], &mut Probe) -> Result<i32, Stop>;

/// A registered in-process target.
#[derive(Clone, Copy)]
pub struct Target {
    pub id: &'static str,
    pub run: TargetFn,
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Target").field("id", &self.id).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub timeout: Duration,
    pub memory: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            timeout: Duration::from_millis(1000),
            memory: 64 << 20,
        }
    }
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("target {target} panicked outside its guarded region: {message}")]
    Harness { target: String, message: String },
    #[error("execution limits must be positive")]
    InvalidLimits,
    #[error("record {0} is not a crash")]
    NotACrash(String),
    #[error("failed to write crash artifact {path}: {source}")]
    Artifact {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Crash,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrashInfo {
    pub signal_kind: String,
    pub frames: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExecutionRecord {
    pub input_id: String,
    pub bitmap: CoverageBitmap,
    pub outcome: Outcome,
    pub exit_status: i32,
    pub raw_signals: RawSignals,
    pub crash: Option<CrashInfo>,
    /// Functions in order of first entry during this run.
    pub call_trace: Vec<String>,
    pub wall_time_us: u64,
}

pub fn input_id(input: &[u8]) -> String {
    format!("{:016x}", fnv1a64(input))
}

/// Runs `input` through `target` once.
pub fn execute(input: &[u8], target: &Target, limits: &Limits) -> Result<ExecutionRecord, ExecError> {
    if limits.timeout.is_zero() || limits.memory == 0 {
        return Err(ExecError::InvalidLimits);
    }
    let start = Instant::now();
    let mut probe = Probe::new(Some(start + limits.timeout), limits.memory);
    let result = catch_unwind(AssertUnwindSafe(|| (target.run)(input, &mut probe)));
    let wall_time_us = start.elapsed().as_micros() as u64;
    let result = result.map_err(|payload| ExecError::Harness {
        target: target.id.to_string(),
        message: panic_message(payload.as_ref()),
    })?;
    let (bitmap, raw_signals, call_trace) = probe.into_parts();

    let (mut outcome, mut exit_status, crash) = match result {
        Ok(status) => (Outcome::Ok, status, None),
        Err(Stop::Fault(f)) => (
            Outcome::Crash,
            EXIT_CRASH,
            Some(CrashInfo {
                signal_kind: f.signal_kind,
                frames: f.frames,
            }),
        ),
        Err(Stop::Timeout) => (Outcome::Timeout, EXIT_TIMEOUT, None),
    };
    // A run that finished but overran its budget still counts as a hang.
    if outcome == Outcome::Ok && wall_time_us > limits.timeout.as_micros() as u64 {
        outcome = Outcome::Timeout;
        exit_status = EXIT_TIMEOUT;
    }
    Ok(ExecutionRecord {
        input_id: input_id(input),
        bitmap,
        outcome,
        exit_status,
        raw_signals,
        crash,
        call_trace,
        wall_time_us,
    })
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

#[derive(Debug, Clone)]
pub struct CoverageDelta {
    pub new_edges: usize,
    pub updated_map: CoverageBitmap,
}

/// Functional form of [`CoverageBitmap::merge_bucketed`].
pub fn coverage_delta(record: &ExecutionRecord, global_map: &CoverageBitmap) -> CoverageDelta {
    let mut updated_map = global_map.clone();
    let new_edges = updated_map.merge_bucketed(&record.bitmap);
    CoverageDelta {
        new_edges,
        updated_map,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BugId {
    pub stack_hash: u64,
    pub signal_kind: String,
}

impl fmt::Display for BugId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{:016x}", self.signal_kind, self.stack_hash)
    }
}

/// Hashes the innermost [`DEFAULT_STACK_DEPTH`] frames plus the signal kind.
pub fn dedup_crash(record: &ExecutionRecord) -> Result<BugId, ExecError> {
    dedup_crash_with_depth(record, DEFAULT_STACK_DEPTH)
}

pub fn dedup_crash_with_depth(record: &ExecutionRecord, depth: usize) -> Result<BugId, ExecError> {
    let crash = match (&record.outcome, &record.crash) {
        (Outcome::Crash, Some(c)) => c,
        _ => return Err(ExecError::NotACrash(record.input_id.clone())),
    };
    let mut h = Fnv64::default();
    for frame in crash.frames.iter().take(depth) {
        h.write_field(frame.as_bytes());
    }
    h.write_field(b"|");
    h.write_field(crash.signal_kind.as_bytes());
    Ok(BugId {
        stack_hash: h.finish(),
        signal_kind: crash.signal_kind.clone(),
    })
}

/// Writes `<outdir>/crashes/<bug_id>/{input.bin,report.txt}`.
///
/// The first input seen for a bug is kept; later calls for the same bug are
/// no-ops. Returns the bug directory.
pub fn write_crash_artifact(
    outdir: &Path,
    bug: &BugId,
    record: &ExecutionRecord,
    input: &[u8],
) -> Result<PathBuf, ExecError> {
    let dir = outdir.join("crashes").join(bug.to_string());
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ExecError::Artifact { path, source }
    };
    if dir.join("report.txt").exists() {
        return Ok(dir);
    }
    std::fs::create_dir_all(&dir).map_err(io(&dir))?;
    let input_path = dir.join("input.bin");
    std::fs::write(&input_path, input).map_err(io(&input_path))?;

    let report_path = dir.join("report.txt");
    let mut report = Vec::new();
    let crash = record.crash.as_ref();
    writeln!(report, "bug_id: {bug}").unwrap();
    writeln!(report, "signal_kind: {}", bug.signal_kind).unwrap();
    writeln!(report, "input_length: {}", input.len()).unwrap();
    writeln!(report, "frames:").unwrap();
    for (i, f) in crash.map(|c| c.frames.as_slice()).unwrap_or_default().iter().enumerate() {
        writeln!(report, "  #{i} {f}").unwrap();
    }
    std::fs::write(&report_path, report).map_err(io(&report_path))?;
    Ok(dir)
}
