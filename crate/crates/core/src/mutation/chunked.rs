//! `chunked-binary`: signature, then `[len: u32 BE][type: 4][data: len]`
//! chunks ending with the end chunk.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::schema::{ChunkedRules, Violation};
use super::Objective;

const U16_BOUNDARY: &[u16] = &[0, 1, 2, 127, 128, 255, 256, 4096, 32767, 32768, 65535];
const WORDS: &[&[u8]] = &[b"Title", b"Author", b"Comment", b"Software", b"Gamma", b"Source"];

fn type_ok(t: &[u8]) -> bool {
    t.iter().all(|&b| b.is_ascii_uppercase() || b == b' ')
}

pub fn validate(input: &[u8], r: &ChunkedRules) -> Vec<Violation> {
    let magic = r.magic.as_bytes();
    if !input.starts_with(magic) {
        return vec![Violation::new("bad_magic", 0)];
    }
    let mut v = Vec::new();
    if input.len() > r.max_len {
        v.push(Violation::new("too_long", r.max_len));
    }
    let mut o = magic.len();
    loop {
        if o == input.len() {
            v.push(Violation::new("missing_end", o));
            break;
        }
        if input.len() - o < 8 {
            v.push(Violation::new("truncated_header", o));
            break;
        }
        let len = u32::from_be_bytes(input[o..o + 4].try_into().unwrap());
        let ty = &input[o + 4..o + 8];
        if !type_ok(ty) {
            v.push(Violation::new("bad_chunk_type", o + 4));
        }
        if len > r.max_chunk_len {
            v.push(Violation::new("length_limit", o));
        }
        if len as usize > input.len() - o - 8 {
            v.push(Violation::new("length_overrun", o));
            break;
        }
        o += 8 + len as usize;
        if ty == r.end_type.as_bytes() {
            if o < input.len() {
                v.push(Violation::new("trailing_data", o));
            }
            break;
        }
    }
    v
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub ty: [u8; 4],
    pub data: Vec<u8>,
}

/// Chunks of a valid input, end chunk excluded.
pub fn parse(input: &[u8], r: &ChunkedRules) -> Option<Vec<Chunk>> {
    if !validate(input, r).is_empty() {
        return None;
    }
    let mut o = r.magic.len();
    let mut out = Vec::new();
    loop {
        let len = u32::from_be_bytes(input[o..o + 4].try_into().unwrap()) as usize;
        let ty: [u8; 4] = input[o + 4..o + 8].try_into().unwrap();
        if ty == r.end_type.as_bytes() {
            return Some(out);
        }
        out.push(Chunk {
            ty,
            data: input[o + 8..o + 8 + len].to_vec(),
        });
        o += 8 + len;
    }
}

pub fn encode(chunks: &[Chunk], r: &ChunkedRules) -> Vec<u8> {
    let mut out = r.magic.as_bytes().to_vec();
    for c in chunks {
        out.extend_from_slice(&(c.data.len() as u32).to_be_bytes());
        out.extend_from_slice(&c.ty);
        out.extend_from_slice(&c.data);
    }
    out.extend_from_slice(&0u32.to_be_bytes());
    out.extend_from_slice(r.end_type.as_bytes());
    out
}

/// Encodes, trimming data and then dropping trailing chunks until the
/// result respects both length limits.
fn fit(mut chunks: Vec<Chunk>, r: &ChunkedRules) -> Vec<u8> {
    for c in chunks.iter_mut() {
        c.data.truncate(r.max_chunk_len as usize);
    }
    loop {
        let out = encode(&chunks, r);
        if out.len() <= r.max_len || chunks.is_empty() {
            return out;
        }
        let excess = out.len() - r.max_len;
        let last = chunks.last_mut().unwrap();
        if last.data.len() > excess {
            let keep = last.data.len() - excess;
            last.data.truncate(keep);
        } else {
            chunks.pop();
        }
    }
}

/// Keeps the signature, rewrites out-of-range lengths to what remains,
/// maps illegal type bytes to letters, drops a torn trailing header and
/// anything after the end chunk, and appends an end chunk if missing.
pub fn sanitize(input: &[u8], r: &ChunkedRules) -> Option<Vec<u8>> {
    let magic = r.magic.as_bytes();
    if !input.starts_with(magic) {
        return None;
    }
    let mut chunks = Vec::new();
    let mut o = magic.len();
    while input.len() - o >= 8 {
        let declared = u32::from_be_bytes(input[o..o + 4].try_into().unwrap()) as usize;
        let mut ty: [u8; 4] = input[o + 4..o + 8].try_into().unwrap();
        for b in ty.iter_mut() {
            if !(b.is_ascii_uppercase() || *b == b' ') {
                *b = b'A' + *b % 26;
            }
        }
        let avail = input.len() - o - 8;
        let take = declared.min(avail);
        if ty == r.end_type.as_bytes() {
            break;
        }
        chunks.push(Chunk {
            ty,
            data: input[o + 8..o + 8 + take].to_vec(),
        });
        o += 8 + take;
    }
    let out = fit(chunks, r);
    (out.len() <= r.max_len).then_some(out)
}

fn head(rng: &mut impl Rng) -> Chunk {
    let dim = |rng: &mut dyn rand::RngCore| -> u16 {
        if rng.random_bool(0.8) {
            rng.random_range(1..=64)
        } else {
            *U16_BOUNDARY.choose(rng).unwrap()
        }
    };
    let w = dim(rng);
    let h = dim(rng);
    let depth = *[1u8, 2, 4, 8, 16].choose(rng).unwrap();
    let color = *[0u8, 2, 3].choose(rng).unwrap();
    let mut data = Vec::with_capacity(7);
    data.extend_from_slice(&w.to_be_bytes());
    data.extend_from_slice(&h.to_be_bytes());
    data.extend_from_slice(&[depth, color, rng.random_range(0..2)]);
    Chunk { ty: *b"HEAD", data }
}

fn data_chunk(rng: &mut impl Rng) -> Chunk {
    let pairs = rng.random_range(1..=12);
    let mut data = Vec::with_capacity(pairs * 2);
    for _ in 0..pairs {
        data.push(rng.random_range(1..=16));
        data.push(rng.random_range(0..16));
    }
    Chunk { ty: *b"DATA", data }
}

fn palette(rng: &mut impl Rng) -> Chunk {
    let n = rng.random_range(1..=16);
    let data = (0..n * 3).map(|_| rng.random()).collect();
    Chunk { ty: *b"PALT", data }
}

fn text(rng: &mut impl Rng) -> Chunk {
    let mut data = WORDS.choose(rng).unwrap().to_vec();
    data.push(0);
    data.extend_from_slice(rng.random_range(-1000..100000).to_string().as_bytes());
    Chunk { ty: *b"TEXT", data }
}

fn random_chunk(rng: &mut impl Rng, r: &ChunkedRules) -> Chunk {
    match rng.random_range(0..5) {
        0 => head(rng),
        1 => palette(rng),
        2 => text(rng),
        3 => data_chunk(rng),
        _ => {
            let ty: [u8; 4] = r
                .chunk_types
                .choose(rng)
                .map(|t| t.as_bytes().try_into().unwrap())
                .unwrap_or(*b"DATA");
            let data = (0..rng.random_range(0..16)).map(|_| rng.random()).collect();
            Chunk { ty, data }
        }
    }
}

pub fn generate(rng: &mut impl Rng, r: &ChunkedRules) -> Vec<u8> {
    let mut chunks = vec![head(rng)];
    if rng.random_bool(0.5) {
        chunks.push(palette(rng));
    }
    for _ in 0..rng.random_range(1..=3) {
        chunks.push(data_chunk(rng));
    }
    if rng.random_bool(0.4) {
        chunks.push(text(rng));
    }
    fit(chunks, r)
}

fn apply_objective(chunks: &mut Vec<Chunk>, objective: Objective, rng: &mut impl Rng, r: &ChunkedRules) -> bool {
    if chunks.is_empty() {
        return false;
    }
    let i = rng.random_range(0..chunks.len());
    match objective {
        Objective::LengthGrowth => {
            let c = &mut chunks[i];
            let grow = (c.data.len() / 5).max(1);
            let at = if &c.ty == b"TEXT" {
                c.data.iter().position(|&b| b == 0).unwrap_or(c.data.len())
            } else {
                c.data.len()
            };
            let fill: Vec<u8> = (0..grow).map(|k| b'A' + (k % 26) as u8).collect();
            c.data.splice(at..at, fill);
        }
        Objective::DelimiterInjection => {
            let c = &mut chunks[i];
            if &c.ty == b"TEXT" && rng.random_bool(0.5) {
                let at = rng.random_range(0..=c.data.len());
                c.data.insert(at, 0);
            } else if let Some(t) = r.chunk_types.choose(rng) {
                c.ty = t.as_bytes().try_into().unwrap();
            }
        }
        Objective::BoundaryValues => {
            let c = &mut chunks[i];
            if &c.ty == b"HEAD" && c.data.len() >= 4 {
                let field = rng.random_range(0..2) * 2;
                let v = *U16_BOUNDARY.choose(rng).unwrap();
                c.data[field..field + 2].copy_from_slice(&v.to_be_bytes());
            } else if !c.data.is_empty() {
                let at = rng.random_range(0..c.data.len());
                c.data[at] = *[0u8, 1, 127, 128, 255].choose(rng).unwrap();
            } else {
                return false;
            }
        }
        Objective::FieldReordering => {
            if chunks.len() < 2 {
                return false;
            }
            let j = rng.random_range(0..chunks.len());
            chunks.swap(i, j);
        }
    }
    true
}

pub fn mutate(seed: &[u8], objective: Objective, rng: &mut impl Rng, r: &ChunkedRules) -> Vec<u8> {
    let Some(mut chunks) = parse(seed, r) else {
        return generate(rng, r);
    };
    if !(rng.random_bool(0.5) && apply_objective(&mut chunks, objective, rng, r)) {
        match rng.random_range(0..4) {
            0 if !chunks.is_empty() => {
                let i = rng.random_range(0..chunks.len());
                let c = chunks[i].clone();
                chunks.insert(i, c);
            }
            1 if chunks.len() > 1 => {
                chunks.remove(rng.random_range(0..chunks.len()));
            }
            2 => {
                let at = rng.random_range(0..=chunks.len());
                chunks.insert(at, random_chunk(rng, r));
            }
            _ => {
                if let Some(c) = chunks.iter_mut().filter(|c| !c.data.is_empty()).last() {
                    let at = rng.random_range(0..c.data.len());
                    c.data[at] = rng.random();
                } else {
                    chunks.push(data_chunk(rng));
                }
            }
        }
    }
    fit(chunks, r)
}
