use std::time::Instant;

use super::bitmap::{CoverageBitmap, MAP_SIZE};
use crate::hash::{fnv1a64, mix64};
use crate::signals::RawSignals;

const MAX_LOGS: usize = 256;
const MAX_OUTPUT: usize = 64 * 1024;
const MAX_TRACE: usize = 64;
const DEADLINE_CHECK_MASK: u64 = 0x3ff;

/// Map index for a block label. `const` so the [`cov!`](crate::cov) macro
/// resolves labels at compile time.
pub const fn block_id(label: &str) -> u32 {
    (mix64(fnv1a64(label.as_bytes())) as u32) & (MAP_SIZE as u32 - 1)
}

/// Records an instrumented block on a [`Probe`].
///
/// The label is qualified with the calling module, so labels only need to be
/// unique within one file.
#[macro_export]
macro_rules! cov {
    ($probe:expr, $label:literal) => {
        $probe.block(const { $crate::executor::block_id(concat!(module_path!(), "::", $label)) })
    };
}

/// A guard tripped inside the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fault {
    pub signal_kind: String,
    /// Shadow call stack at the fault, innermost first.
    pub frames: Vec<String>,
}

/// Why a target run stopped early.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stop {
    Fault(Fault),
    Timeout,
}

/// Instrumentation context handed to a target for one execution.
pub struct Probe {
    map: CoverageBitmap,
    prev_loc: u32,
    steps: u64,
    deadline: Option<Instant>,
    memory_limit: u64,
    memory_used: u64,
    frames: Vec<&'static str>,
    call_trace: Vec<&'static str>,
    pub(crate) signals: RawSignals,
}

impl Probe {
    pub(crate) fn new(deadline: Option<Instant>, memory_limit: u64) -> Self {
        Probe {
            map: CoverageBitmap::new(),
            prev_loc: 0,
            steps: 0,
            deadline,
            memory_limit,
            memory_used: 0,
            frames: Vec::new(),
            call_trace: Vec::new(),
            signals: RawSignals::default(),
        }
    }

    /// A probe with no deadline, for driving targets directly in tests.
    pub fn detached() -> Self {
        Self::new(None, u64::MAX)
    }

    /// Records the edge from the previous block to `id`.
    #[inline]
    pub fn block(&mut self, id: u32) -> Result<(), Stop> {
        let cur = id & (MAP_SIZE as u32 - 1);
        self.map.hit((cur ^ self.prev_loc) as usize);
        self.prev_loc = cur >> 1;
        self.steps += 1;
        if self.steps & DEADLINE_CHECK_MASK == 0 {
            if let Some(d) = self.deadline {
                if Instant::now() >= d {
                    return Err(Stop::Timeout);
                }
            }
        }
        Ok(())
    }

    /// Runs `body` as function `name`: pushes a shadow frame, marks the
    /// function's entry block and records it in the call trace.
    pub fn call<T>(
        &mut self,
        name: &'static str,
        body: impl FnOnce(&mut Probe) -> Result<T, Stop>,
    ) -> Result<T, Stop> {
        self.frames.push(name);
        if self.call_trace.len() < MAX_TRACE && !self.call_trace.contains(&name) {
            self.call_trace.push(name);
        }
        let r = self.block(block_id(name)).and_then(|_| body(self));
        self.frames.pop();
        r
    }

    /// Builds a fault carrying the current shadow stack.
    pub fn fault(&self, signal_kind: &str) -> Stop {
        Stop::Fault(Fault {
            signal_kind: signal_kind.to_string(),
            frames: self.frames.iter().rev().map(|f| f.to_string()).collect(),
        })
    }

    /// Faults with `signal_kind` unless `ok` holds.
    pub fn guard(&self, ok: bool, signal_kind: &str) -> Result<(), Stop> {
        if ok {
            Ok(())
        } else {
            Err(self.fault(signal_kind))
        }
    }

    /// Accounts a simulated allocation against the memory limit.
    pub fn alloc(&mut self, bytes: usize) -> Result<(), Stop> {
        self.memory_used = self.memory_used.saturating_add(bytes as u64);
        if self.memory_used > self.memory_limit {
            return Err(self.fault("memory_limit"));
        }
        Ok(())
    }

    pub fn log(&mut self, message: impl Into<String>) {
        if self.signals.log_messages.len() < MAX_LOGS {
            self.signals.log_messages.push(message.into());
        }
    }

    pub fn ret(&mut self, name: &str, value: i64) {
        self.signals.return_values.push((name.to_string(), value));
    }

    /// Hashes the post-run contents of a named state region.
    pub fn state(&mut self, region: &str, contents: &[u8]) {
        self.signals
            .state_hashes
            .push((region.to_string(), fnv1a64(contents)));
    }

    pub fn output(&mut self, bytes: &[u8]) {
        let room = MAX_OUTPUT.saturating_sub(self.signals.output_bytes.len());
        let n = room.min(bytes.len());
        self.signals.output_bytes.extend_from_slice(&bytes[..n]);
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub(crate) fn into_parts(self) -> (CoverageBitmap, RawSignals, Vec<String>) {
        (
            self.map,
            self.signals,
            self.call_trace.into_iter().map(String::from).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_ids_fit_map() {
        for label in ["a", "b", "parse_chunk", ""] {
            assert!((block_id(label) as usize) < MAP_SIZE);
        }
        assert_ne!(block_id("a"), block_id("b"));
    }

    #[test]
    fn fault_captures_innermost_first() {
        let mut p = Probe::detached();
        let stop = p
            .call("outer", |p| p.call("inner", |p| Err::<(), _>(p.fault("boom"))))
            .unwrap_err();
        match stop {
            Stop::Fault(f) => {
                assert_eq!(f.frames, vec!["inner", "outer"]);
                assert_eq!(f.signal_kind, "boom");
            }
            Stop::Timeout => panic!("unexpected timeout"),
        }
        assert!(p.frames.is_empty());
    }

    #[test]
    fn memory_limit_faults() {
        let mut p = Probe::new(None, 100);
        assert!(p.alloc(60).is_ok());
        assert!(matches!(p.alloc(60), Err(Stop::Fault(_))));
    }

    #[test]
    fn output_is_capped() {
        let mut p = Probe::detached();
        p.output(&vec![b'x'; MAX_OUTPUT + 10]);
        assert_eq!(p.signals.output_bytes.len(), MAX_OUTPUT);
    }
}
