//! `raw-bytes`: anything up to a length limit.

use rand::Rng;

use super::schema::{RawRules, Violation};
use super::Objective;

pub fn validate(input: &[u8], r: &RawRules) -> Vec<Violation> {
    if input.len() > r.max_len {
        vec![Violation::new("too_long", r.max_len)]
    } else {
        Vec::new()
    }
}

pub fn sanitize(input: &[u8], r: &RawRules) -> Option<Vec<u8>> {
    Some(input[..input.len().min(r.max_len)].to_vec())
}

pub fn generate(rng: &mut impl Rng, r: &RawRules) -> Vec<u8> {
    let n = rng.random_range(1..=r.max_len.clamp(1, 64));
    (0..n).map(|_| rng.random()).collect()
}

pub fn mutate(seed: &[u8], objective: Objective, rng: &mut impl Rng, r: &RawRules) -> Vec<u8> {
    let mut out = seed.to_vec();
    match objective {
        Objective::LengthGrowth => {
            let grow = (out.len() / 5).max(1);
            out.extend((0..grow).map(|_| rng.random::<u8>()));
        }
        Objective::DelimiterInjection => {
            let at = rng.random_range(0..=out.len());
            out.insert(at, *[b',', b';', b' ', b'\n', 0].get(rng.random_range(0..5)).unwrap());
        }
        Objective::BoundaryValues if !out.is_empty() => {
            let at = rng.random_range(0..out.len());
            out[at] = [0u8, 1, 127, 128, 255][rng.random_range(0..5)];
        }
        Objective::FieldReordering if out.len() > 1 => {
            let a = rng.random_range(0..out.len());
            let b = rng.random_range(0..out.len());
            out.swap(a, b);
        }
        _ => out.push(rng.random()),
    }
    out.truncate(r.max_len);
    out
}
