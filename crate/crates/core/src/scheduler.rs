//! Seed pool: admission on new coverage or semantic novelty, energy-weighted
//! selection, and per-seed energy adaptation.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{input_id, CoverageBitmap, ExecutionRecord};
use crate::target_model::SeedAnnotation;

pub const MIN_ENERGY: f64 = 0.1;
pub const MAX_ENERGY: f64 = 100.0;
const CHILD_GAIN: f64 = 1.2;
const IDLE_DECAY: f64 = 0.9;
const API_BONUS: f64 = 1.5;
const HELPER_BONUS: f64 = 1.5;

#[derive(Debug, Error, PartialEq)]
pub enum SchedulerError {
    #[error("seed pool is empty")]
    EmptyPool,
    #[error("unknown seed {0}")]
    UnknownSeed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Master,
    Helper,
    Initial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Admission {
    Coverage,
    Novelty,
    Both,
    Initial,
}

impl Admission {
    pub fn as_str(self) -> &'static str {
        match self {
            Admission::Coverage => "coverage",
            Admission::Novelty => "novelty",
            Admission::Both => "both",
            Admission::Initial => "initial",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "coverage" => Admission::Coverage,
            "novelty" => Admission::Novelty,
            "both" => Admission::Both,
            "initial" => Admission::Initial,
            _ => return None,
        })
    }
}

impl fmt::Display for Admission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueEntry {
    pub seed_id: String,
    pub bytes: Vec<u8>,
    pub source: Source,
    pub admission: Admission,
    pub novelty_score: Option<f64>,
    pub new_edges: usize,
    pub annotation: SeedAnnotation,
    pub energy: f64,
    /// Logical admission clock of the owning pool.
    pub created_at: u64,
    pub parent: Option<String>,
}

/// Starting energy of a seed.
///
/// `1 * (1 + novelty) * (1 + log2(1 + new_edges)) * api_bonus * helper_bonus`,
/// where the API bonus applies when the seed's annotation touches at least
/// two API categories and the helper bonus to seeds contributed by a helper.
pub fn initial_energy(entry: &QueueEntry) -> f64 {
    let mut e = 1.0;
    e *= 1.0 + entry.novelty_score.unwrap_or(0.0);
    e *= 1.0 + (1.0 + entry.new_edges as f64).log2();
    if entry.annotation.touched_api_categories.len() >= 2 {
        e *= API_BONUS;
    }
    if entry.source == Source::Helper {
        e *= HELPER_BONUS;
    }
    e.clamp(MIN_ENERGY, MAX_ENERGY)
}

/// Admission predicate on its own, without touching a pool.
pub fn admission_for(new_edges: usize, score: Option<f64>, tau: Option<f64>) -> Option<Admission> {
    let novel = match (score, tau) {
        (Some(s), Some(t)) => s > t,
        _ => false,
    };
    match (new_edges > 0, novel) {
        (true, true) => Some(Admission::Both),
        (true, false) => Some(Admission::Coverage),
        (false, true) => Some(Admission::Novelty),
        (false, false) => None,
    }
}

/// Where an admitted input came from.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub source: Source,
    pub parent: Option<String>,
    pub annotation: SeedAnnotation,
}

#[derive(Debug, Clone)]
pub struct SeedPool {
    entries: Vec<QueueEntry>,
    positions: HashMap<String, usize>,
    global_map: CoverageBitmap,
    /// Novelty threshold; `None` turns the semantic channel off.
    tau: Option<f64>,
    rng: ChaCha8Rng,
    clock: u64,
    seen_bytes: HashSet<u64>,
}

impl SeedPool {
    pub fn new(tau: Option<f64>, rng_seed: u64) -> Self {
        SeedPool {
            entries: Vec::new(),
            positions: HashMap::new(),
            global_map: CoverageBitmap::new(),
            tau,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            clock: 0,
            seen_bytes: HashSet::new(),
        }
    }

    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[QueueEntry] {
        &self.entries
    }

    pub fn get(&self, seed_id: &str) -> Option<&QueueEntry> {
        self.positions.get(seed_id).map(|&i| &self.entries[i])
    }

    pub fn global_map(&self) -> &CoverageBitmap {
        &self.global_map
    }

    pub fn edges(&self) -> usize {
        self.global_map.count_nonzero()
    }

    pub fn contains_bytes(&self, bytes: &[u8]) -> bool {
        self.seen_bytes.contains(&crate::hash::fnv1a64(bytes))
    }

    /// Merges `record` into the global map and admits `input` if it found
    /// new edges or scored above the novelty threshold.
    ///
    /// Inputs already in the pool byte-for-byte are never admitted twice.
    pub fn admit(
        &mut self,
        input: &[u8],
        record: &ExecutionRecord,
        score: Option<f64>,
        provenance: Provenance,
    ) -> Option<QueueEntry> {
        let new_edges = self.global_map.merge_bucketed(&record.bitmap);
        let admission = admission_for(new_edges, score, self.tau)?;
        if self.contains_bytes(input) {
            return None;
        }
        let novelty_score = if self.tau.is_some() { score } else { None };
        Some(self.insert(input, admission, novelty_score, new_edges, provenance))
    }

    /// Adds an initial corpus entry unconditionally (duplicates excepted).
    pub fn add_initial(&mut self, input: &[u8], record: &ExecutionRecord, annotation: SeedAnnotation) -> Option<QueueEntry> {
        let new_edges = self.global_map.merge_bucketed(&record.bitmap);
        if self.contains_bytes(input) {
            return None;
        }
        let provenance = Provenance {
            source: Source::Initial,
            parent: None,
            annotation,
        };
        Some(self.insert(input, Admission::Initial, None, new_edges, provenance))
    }

    fn insert(
        &mut self,
        input: &[u8],
        admission: Admission,
        novelty_score: Option<f64>,
        new_edges: usize,
        provenance: Provenance,
    ) -> QueueEntry {
        let mut entry = QueueEntry {
            seed_id: input_id(input),
            bytes: input.to_vec(),
            source: provenance.source,
            admission,
            novelty_score,
            new_edges,
            annotation: provenance.annotation,
            energy: 1.0,
            created_at: self.clock,
            parent: provenance.parent,
        };
        entry.energy = initial_energy(&entry);
        self.clock += 1;
        self.seen_bytes.insert(crate::hash::fnv1a64(input));
        self.positions.insert(entry.seed_id.clone(), self.entries.len());
        self.entries.push(entry.clone());
        entry
    }

    /// Energy-weighted random choice. Entries are walked oldest first, so
    /// equal weights resolve toward the oldest seed.
    pub fn select_next(&mut self) -> Result<&QueueEntry, SchedulerError> {
        if self.entries.is_empty() {
            return Err(SchedulerError::EmptyPool);
        }
        let total: f64 = self.entries.iter().map(|e| e.energy).sum();
        let mut u = self.rng.random::<f64>() * total;
        let mut pick = self.entries.len() - 1;
        for (i, e) in self.entries.iter().enumerate() {
            if u < e.energy {
                pick = i;
                break;
            }
            u -= e.energy;
        }
        Ok(&self.entries[pick])
    }

    /// `energy *= 1.2^children` when children were admitted, `*= 0.9`
    /// otherwise, clamped to `[0.1, 100]`.
    pub fn update_energy(&mut self, seed_id: &str, children_admitted: u32) -> Result<f64, SchedulerError> {
        let &i = self
            .positions
            .get(seed_id)
            .ok_or_else(|| SchedulerError::UnknownSeed(seed_id.to_string()))?;
        let e = &mut self.entries[i].energy;
        *e = adapt_energy(*e, children_admitted);
        Ok(*e)
    }
}

pub fn adapt_energy(energy: f64, children_admitted: u32) -> f64 {
    let factor = if children_admitted == 0 {
        IDLE_DECAY
    } else {
        CHILD_GAIN.powi(children_admitted as i32)
    };
    (energy * factor).clamp(MIN_ENERGY, MAX_ENERGY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::{Outcome, MAP_SIZE};
    use crate::signals::RawSignals;
    use crate::target_model::ApiCategory;

    fn record(edges: &[usize]) -> ExecutionRecord {
        let mut bitmap = CoverageBitmap::new();
        for &e in edges {
            bitmap.hit(e % MAP_SIZE);
        }
        ExecutionRecord {
            input_id: String::new(),
            bitmap,
            outcome: Outcome::Ok,
            exit_status: 0,
            raw_signals: RawSignals::default(),
            crash: None,
            call_trace: Vec::new(),
            wall_time_us: 0,
        }
    }

    fn prov(source: Source) -> Provenance {
        Provenance {
            source,
            parent: None,
            annotation: SeedAnnotation::empty("x"),
        }
    }

    #[test]
    fn admission_paths() {
        let mut pool = SeedPool::new(Some(0.25), 1);
        let e = pool.admit(b"a", &record(&[1, 2]), Some(0.1), prov(Source::Master)).unwrap();
        assert_eq!((e.admission, e.new_edges), (Admission::Coverage, 2));
        let e = pool.admit(b"b", &record(&[1]), Some(0.4), prov(Source::Helper)).unwrap();
        assert_eq!(e.admission, Admission::Novelty);
        assert!(pool.admit(b"c", &record(&[2]), Some(0.2), prov(Source::Helper)).is_none());
        assert!(pool.admit(b"d", &record(&[2]), Some(0.25), prov(Source::Helper)).is_none());
        let e = pool.admit(b"e", &record(&[9]), Some(0.9), prov(Source::Helper)).unwrap();
        assert_eq!(e.admission, Admission::Both);
    }

    #[test]
    fn semantic_off_is_coverage_only() {
        let mut pool = SeedPool::new(None, 1);
        assert!(pool.admit(b"a", &record(&[1]), Some(0.99), prov(Source::Helper)).is_some());
        assert!(pool.admit(b"b", &record(&[1]), Some(0.99), prov(Source::Helper)).is_none());
        assert_eq!(pool.entries()[0].novelty_score, None);
    }

    #[test]
    fn duplicate_bytes_not_readmitted() {
        let mut pool = SeedPool::new(Some(0.25), 1);
        assert!(pool.admit(b"a", &record(&[1]), None, prov(Source::Master)).is_some());
        assert!(pool.admit(b"a", &record(&[2]), None, prov(Source::Master)).is_none());
        assert_eq!(pool.edges(), 2);
    }

    #[test]
    fn energy_law() {
        let mut pool = SeedPool::new(Some(0.25), 1);
        let e = pool.admit(b"a", &record(&[1, 2, 3]), Some(0.5), prov(Source::Master)).unwrap();
        assert!((e.energy - 1.5 * 3.0).abs() < 1e-12);
        let mut ann = SeedAnnotation::empty("y");
        ann.touched_api_categories.insert(ApiCategory::MemoryAlloc);
        ann.touched_api_categories.insert(ApiCategory::StringParsing);
        let p = Provenance {
            source: Source::Helper,
            parent: None,
            annotation: ann,
        };
        let e = pool.admit(b"b", &record(&[7]), None, p).unwrap();
        assert!((e.energy - 2.0 * 1.5 * 1.5).abs() < 1e-12);
    }

    #[test]
    fn update_energy_examples() {
        let mut pool = SeedPool::new(None, 1);
        let id = pool.admit(b"a", &record(&[1]), None, prov(Source::Master)).unwrap().seed_id;
        let before = pool.get(&id).unwrap().energy;
        let after = pool.update_energy(&id, 3).unwrap();
        assert!((after - before * 1.728).abs() < 1e-9);
        for _ in 0..200 {
            pool.update_energy(&id, 0).unwrap();
        }
        assert_eq!(pool.get(&id).unwrap().energy, MIN_ENERGY);
        for _ in 0..200 {
            pool.update_energy(&id, 5).unwrap();
        }
        assert_eq!(pool.get(&id).unwrap().energy, MAX_ENERGY);
        assert_eq!(pool.update_energy("nope", 1), Err(SchedulerError::UnknownSeed("nope".into())));
    }

    #[test]
    fn select_requires_entries() {
        let mut pool = SeedPool::new(None, 1);
        assert_eq!(pool.select_next().unwrap_err(), SchedulerError::EmptyPool);
        pool.admit(b"a", &record(&[1]), None, prov(Source::Master)).unwrap();
        assert_eq!(pool.select_next().unwrap().bytes, b"a");
    }
}
