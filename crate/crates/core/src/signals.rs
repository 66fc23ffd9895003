//! Runtime behavior signals and their canonical token form.
//!
//! Raw signals are what a target reports during a run: named return values,
//! log lines, an exception class, hashes of declared state regions and the
//! bytes it wrote. [`canonicalize`] flattens them into kind-tagged tokens,
//! bucketing numbers so that near-identical runs tokenize identically.

use crate::executor::{ExecutionRecord, Outcome};

/// Output kept per run for semantic comparison.
pub const OUTPUT_CAP: usize = 4096;
/// Hard cap on tokens per run.
pub const MAX_TOKENS: usize = 2048;
/// Cap on `out:` tokens; output is the noisiest signal class.
pub const MAX_OUTPUT_WORDS: usize = 256;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawSignals {
    pub return_values: Vec<(String, i64)>,
    pub log_messages: Vec<String>,
    pub exception_type: Option<String>,
    pub state_hashes: Vec<(String, u64)>,
    pub output_bytes: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct SignalTokens {
    pub tokens: Vec<String>,
}

impl SignalTokens {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Derives the five signal classes from a finished run.
pub fn extract_signals(record: &ExecutionRecord) -> RawSignals {
    let raw = &record.raw_signals;
    let exception_type = match record.outcome {
        Outcome::Crash => record
            .crash
            .as_ref()
            .map(|c| c.signal_kind.clone())
            .or_else(|| raw.exception_type.clone()),
        Outcome::Timeout => Some("timeout".to_string()),
        Outcome::Ok => raw.exception_type.clone(),
    };
    let keep = raw.output_bytes.len().min(OUTPUT_CAP);
    RawSignals {
        return_values: raw.return_values.clone(),
        log_messages: raw.log_messages.clone(),
        exception_type,
        state_hashes: raw.state_hashes.clone(),
        output_bytes: raw.output_bytes[..keep].to_vec(),
    }
}

/// Largest power of two not above `|v|`, sign preserved; zero stays zero.
pub fn pow2_bucket(v: i64) -> i64 {
    if v == 0 {
        return 0;
    }
    let mag = v.unsigned_abs();
    let floor = 1u64 << (63 - mag.leading_zeros());
    if v < 0 {
        // |i64::MIN| is itself a power of two.
        (floor as i64).wrapping_neg()
    } else {
        floor as i64
    }
}

pub fn canonicalize(signals: &RawSignals) -> SignalTokens {
    let mut tokens = Vec::new();
    let push = |t: String, tokens: &mut Vec<String>| {
        if tokens.len() < MAX_TOKENS {
            tokens.push(t);
        }
    };
    for (name, v) in &signals.return_values {
        push(format!("ret:{name}={}", pow2_bucket(*v)), &mut tokens);
    }
    for line in &signals.log_messages {
        for word in line.split_whitespace() {
            push(format!("log:{}", word.to_lowercase()), &mut tokens);
        }
    }
    if let Some(exc) = &signals.exception_type {
        push(format!("exc:{exc}"), &mut tokens);
    }
    for (region, h) in &signals.state_hashes {
        push(format!("mem:{region}={:08x}", h >> 32), &mut tokens);
    }
    let out = String::from_utf8_lossy(&signals.output_bytes);
    for word in out.split_whitespace().take(MAX_OUTPUT_WORDS) {
        push(format!("out:{}", word.to_lowercase()), &mut tokens);
    }
    SignalTokens { tokens }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_hand_table() {
        let table = [
            (0, 0),
            (1, 1),
            (2, 2),
            (3, 2),
            (4, 4),
            (7, 4),
            (8, 8),
            (100, 64),
            (1024, 1024),
            (1025, 1024),
            (-3, -2),
            (-100, -64),
            (i64::MAX, 1 << 62),
            (i64::MIN, i64::MIN),
        ];
        for (v, b) in table {
            assert_eq!(pow2_bucket(v), b, "value {v}");
        }
    }

    #[test]
    fn empty_signals_no_tokens() {
        assert!(canonicalize(&RawSignals::default()).is_empty());
    }

    #[test]
    fn log_words_split_and_lowercased() {
        let s = RawSignals {
            log_messages: vec!["Parsed 3 chunks".into()],
            ..Default::default()
        };
        assert_eq!(
            canonicalize(&s).tokens,
            vec!["log:parsed", "log:3", "log:chunks"]
        );
    }

    #[test]
    fn return_value_bucketed() {
        let s = RawSignals {
            return_values: vec![("n".into(), 100)],
            ..Default::default()
        };
        assert_eq!(canonicalize(&s).tokens, vec!["ret:n=64"]);
    }

    #[test]
    fn token_order_by_class() {
        let s = RawSignals {
            return_values: vec![("rc".into(), 0)],
            log_messages: vec!["hi".into()],
            exception_type: Some("oops".into()),
            state_hashes: vec![("hdr".into(), 0xdead_beef_0000_0001)],
            output_bytes: b"Out put".to_vec(),
        };
        assert_eq!(
            canonicalize(&s).tokens,
            vec!["ret:rc=0", "log:hi", "exc:oops", "mem:hdr=deadbeef", "out:out", "out:put"]
        );
    }

    #[test]
    fn token_cap_enforced() {
        let s = RawSignals {
            log_messages: vec!["w ".repeat(5000)],
            ..Default::default()
        };
        let t = canonicalize(&s);
        assert_eq!(t.len(), MAX_TOKENS);
        assert!(t.tokens.iter().all(|x| !x.is_empty()));
    }
}
