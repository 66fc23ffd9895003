//! Format-blind stacked byte mutations for the throughput-oriented master.

use rand::seq::IndexedRandom;
use rand::Rng;

const INTERESTING_8: &[u8] = &[0, 1, 16, 32, 64, 100, 127, 128, 255];
const INTERESTING_16: &[u16] = &[0, 128, 255, 256, 512, 1000, 1024, 4096, 32767, 32768, 65535];
const INTERESTING_32: &[u32] = &[0, 1, 32768, 65535, 65536, 100_000, 0x7fff_ffff, 0x8000_0000, 0xffff_ffff];

/// Applies 1 to 16 random edits to a copy of `seed`, optionally splicing in
/// a slice of `other`; the result is capped at `max_len`.
pub fn havoc(seed: &[u8], other: Option<&[u8]>, rng: &mut impl Rng, max_len: usize) -> Vec<u8> {
    let mut out = seed.to_vec();
    let rounds = 1 << rng.random_range(0..5);
    for _ in 0..rounds {
        if out.is_empty() {
            out.push(rng.random());
            continue;
        }
        let len = out.len();
        let at = rng.random_range(0..len);
        match rng.random_range(0..12) {
            0 => out[at] ^= 1 << rng.random_range(0..8),
            1 => out[at] = *INTERESTING_8.choose(rng).unwrap(),
            2 if len >= 2 => {
                let at = rng.random_range(0..len - 1);
                let v = INTERESTING_16.choose(rng).unwrap().to_be_bytes();
                out[at..at + 2].copy_from_slice(&v);
            }
            3 if len >= 4 => {
                let at = rng.random_range(0..len - 3);
                let v = *INTERESTING_32.choose(rng).unwrap();
                let bytes = if rng.random_bool(0.5) { v.to_be_bytes() } else { v.to_le_bytes() };
                out[at..at + 4].copy_from_slice(&bytes);
            }
            4 => out[at] = out[at].wrapping_add(rng.random_range(1..=35)),
            5 => out[at] = out[at].wrapping_sub(rng.random_range(1..=35)),
            6 => out[at] = rng.random(),
            7 if len > 1 => {
                let n = rng.random_range(1..=(len - at).min(32));
                out.drain(at..at + n);
            }
            8 => {
                let n = rng.random_range(1..=(len - at).min(32));
                let block = out[at..at + n].to_vec();
                let to = rng.random_range(0..=out.len());
                out.splice(to..to, block);
            }
            9 => {
                let n = rng.random_range(1..=16);
                let b = rng.random();
                out.splice(at..at, std::iter::repeat_n(b, n));
            }
            10 => {
                if let Some(o) = other.filter(|o| !o.is_empty()) {
                    let from = rng.random_range(0..o.len());
                    let n = rng.random_range(1..=(o.len() - from).min(64));
                    out.splice(at..at, o[from..from + n].iter().copied());
                } else {
                    out.swap(at, rng.random_range(0..len));
                }
            }
            _ => {
                let n = rng.random_range(1..=(len - at).min(16));
                let to = rng.random_range(0..=len - n);
                let block = out[to..to + n].to_vec();
                out[at..at + n.min(len - at)].copy_from_slice(&block[..n.min(len - at)]);
            }
        }
        out.truncate(max_len);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deterministic_and_bounded() {
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(1);
        for i in 0..500 {
            let seed = vec![i as u8; i % 40];
            let x = havoc(&seed, Some(b"splice me"), &mut a, 48);
            assert_eq!(x, havoc(&seed, Some(b"splice me"), &mut b, 48));
            assert!(x.len() <= 48);
        }
    }
}
