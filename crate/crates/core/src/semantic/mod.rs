//! Semantic novelty: embedding of signal tokens, streaming PCA down to a
//! small dimension, nearest-neighbor lookup, and the novelty score
//! `1 - cos(query, nearest)` with its admission threshold.

mod embed;
mod index;
mod pca;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{embed, Embedder, EmbedderKind, Embedding, RemoteEmbedder, EMBED_DIM, REMOTE_EMBED_TIMEOUT};
pub use index::{cosine, Neighbor, NoveltyIndex};
pub use pca::{PcaState, ReducedEmbedding, PCA_WARMUP};

use crate::signals::SignalTokens;

pub const DEFAULT_TAU: f64 = 0.25;
pub const DEFAULT_D_PRIME: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum SemanticError {
    #[error("id {0:?} already indexed")]
    DuplicateId(String),
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("partial_fit needs a non-empty batch")]
    EmptyBatch,
    #[error("retained variance needs at least 2 samples, have {0}")]
    InsufficientSamples(u64),
    #[error("requested {requested} components, {tracked} tracked")]
    ComponentOutOfRange { requested: usize, tracked: usize },
    #[error("tau must lie strictly between 0 and 1, got {0}")]
    InvalidTau(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoveltyConfig {
    pub tau: f64,
    pub d_prime: usize,
    pub embedder: EmbedderKind,
}

impl Default for NoveltyConfig {
    fn default() -> Self {
        NoveltyConfig {
            tau: DEFAULT_TAU,
            d_prime: DEFAULT_D_PRIME,
            embedder: EmbedderKind::BuiltinHash,
        }
    }
}

impl NoveltyConfig {
    pub fn with_tau(tau: f64) -> Result<Self, SemanticError> {
        let c = NoveltyConfig {
            tau,
            ..Default::default()
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), SemanticError> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(SemanticError::InvalidTau(self.tau));
        }
        if self.d_prime == 0 || self.d_prime > EMBED_DIM {
            return Err(SemanticError::ComponentOutOfRange {
                requested: self.d_prime,
                tracked: EMBED_DIM,
            });
        }
        Ok(())
    }
}

pub fn pca_partial_fit(mut state: PcaState, batch: &[Embedding]) -> Result<PcaState, SemanticError> {
    state.partial_fit(batch)?;
    Ok(state)
}

pub fn pca_transform(state: &PcaState, e: &Embedding) -> ReducedEmbedding {
    state.transform(e)
}

pub fn retained_variance(state: &PcaState, d_prime: usize) -> Result<f64, SemanticError> {
    state.retained_variance(d_prime)
}

pub fn index_insert(index: &mut NoveltyIndex, id: &str, r: &ReducedEmbedding) -> Result<(), SemanticError> {
    index.insert(id, r)
}

pub fn nearest(index: &NoveltyIndex, query: &ReducedEmbedding) -> Option<Neighbor> {
    index.nearest(query)
}

/// `1 - cos(query, nearest)`, clamped to `[0, 1]`.
///
/// An empty index or a zero-norm query scores 1.0: nothing comparable has
/// been seen.
pub fn novelty(query: &ReducedEmbedding, index: &NoveltyIndex) -> f64 {
    match index.nearest(query) {
        None => 1.0,
        Some(n) => (1.0 - n.cosine).clamp(0.0, 1.0),
    }
}

/// Strict `score > tau`.
pub fn is_novel(score: f64, config: &NoveltyConfig) -> bool {
    score > config.tau
}

/// Mean of `clamp(1 - cos, 0, 1)` over all unordered pairs; 0 for fewer
/// than two vectors.
pub fn mean_pairwise_novelty(window: &[ReducedEmbedding]) -> f64 {
    let n = window.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let c = cosine(&window[i].vector, window[i].norm, &window[j].vector, window[j].norm);
            sum += (1.0 - c).clamp(0.0, 1.0);
        }
    }
    sum / (n * (n - 1) / 2) as f64
}

/// Knobs for [`SemanticEngine`] that are not part of [`NoveltyConfig`].
#[derive(Debug, Clone, Copy)]
pub struct EngineSettings {
    /// Embeddings buffered per PCA update.
    pub fit_batch: usize,
    /// PCA stops updating once this many samples were fitted.
    pub fit_limit: u64,
    /// One in this many rejected executions is still indexed.
    pub reject_stride: u64,
    /// Past `fit_limit`, a buffered batch is still fitted when one of its
    /// embeddings leaves at least this much squared norm outside the kept
    /// subspace. Behavior first seen after the limit would otherwise be
    /// projected away for good.
    pub refit_residual: f64,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings {
            fit_batch: PCA_WARMUP as usize,
            fit_limit: 4096,
            reject_stride: 64,
            refit_residual: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scored {
    pub embedding: Embedding,
    pub reduced: ReducedEmbedding,
    pub novelty: f64,
}

/// Novelty state owned by one fuzzer: embedder, PCA, index, and the full
/// embeddings behind every indexed entry.
///
/// Whenever the PCA is refitted the index is rebuilt from the stored full
/// embeddings, so all entries are always expressed in the current basis.
#[derive(Debug, Clone)]
pub struct SemanticEngine {
    config: NoveltyConfig,
    settings: EngineSettings,
    embedder: Embedder,
    pca: PcaState,
    pending: Vec<Embedding>,
    index: NoveltyIndex,
    stored: Vec<Embedding>,
    rejected: u64,
    unexplained: bool,
}

impl SemanticEngine {
    pub fn new(config: NoveltyConfig, embedder: Embedder) -> Result<Self, SemanticError> {
        Self::with_settings(config, embedder, EngineSettings::default())
    }

    pub fn with_settings(
        config: NoveltyConfig,
        embedder: Embedder,
        settings: EngineSettings,
    ) -> Result<Self, SemanticError> {
        config.validate()?;
        Ok(SemanticEngine {
            config,
            settings,
            embedder,
            pca: PcaState::new(EMBED_DIM, config.d_prime),
            pending: Vec::new(),
            index: NoveltyIndex::new(config.d_prime),
            stored: Vec::new(),
            rejected: 0,
            unexplained: false,
        })
    }

    pub fn config(&self) -> &NoveltyConfig {
        &self.config
    }

    pub fn pca(&self) -> &PcaState {
        &self.pca
    }

    pub fn index(&self) -> &NoveltyIndex {
        &self.index
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    pub fn score(&mut self, tokens: &SignalTokens) -> Scored {
        let embedding = self.embedder.embed(tokens);
        let reduced = self.pca.transform(&embedding);
        let novelty = novelty(&reduced, &self.index);
        Scored {
            embedding,
            reduced,
            novelty,
        }
    }

    pub fn is_novel(&self, score: f64) -> bool {
        is_novel(score, &self.config)
    }

    /// Feeds a scored execution back: admitted ones are always indexed,
    /// rejected ones once per `reject_stride`. Every embedding is buffered
    /// for the next PCA update.
    pub fn observe(&mut self, scored: Scored, admitted: bool) {
        let keep = if admitted {
            true
        } else {
            self.rejected += 1;
            self.rejected % self.settings.reject_stride == 0
        };
        if keep {
            let id = format!("{:08}", self.stored.len());
            self.index
                .insert(&id, &scored.reduced)
                .expect("sequential ids are unique and dimensions fixed");
            self.stored.push(scored.embedding.clone());
        }
        let fitting = self.pca.samples_seen() < self.settings.fit_limit;
        if !fitting && self.pca.residual(&scored.embedding, &scored.reduced) >= self.settings.refit_residual {
            self.unexplained = true;
        }
        self.pending.push(scored.embedding);
        if self.pending.len() >= self.settings.fit_batch {
            let batch = std::mem::take(&mut self.pending);
            if fitting || self.unexplained {
                self.pca.partial_fit(&batch).expect("non-empty batch of fixed width");
                self.reindex();
                self.unexplained = false;
            }
        }
    }

    fn reindex(&mut self) {
        self.index.clear();
        for (i, e) in self.stored.iter().enumerate() {
            let r = self.pca.transform(e);
            self.index
                .insert(&format!("{i:08}"), &r)
                .expect("fresh index");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(v: &[f64]) -> ReducedEmbedding {
        ReducedEmbedding::new(v.to_vec(), false)
    }

    #[test]
    fn novelty_examples() {
        let mut idx = NoveltyIndex::new(2);
        assert_eq!(novelty(&r(&[1.0, 0.0]), &idx), 1.0);
        idx.insert("a", &r(&[1.0, 0.0])).unwrap();
        assert_eq!(novelty(&r(&[1.0, 0.0]), &idx), 0.0);
        assert!((novelty(&r(&[0.0, 3.0]), &idx) - 1.0).abs() < 1e-12);
        assert_eq!(novelty(&r(&[0.0, 0.0]), &idx), 1.0);
        assert_eq!(novelty(&r(&[-1.0, 0.0]), &idx), 1.0);
    }

    #[test]
    fn gate_is_strict() {
        let c = NoveltyConfig::default();
        assert!(!is_novel(0.25, &c));
        assert!(is_novel(0.26, &c));
        assert!(is_novel(1.0, &NoveltyConfig::with_tau(0.99).unwrap()));
    }

    #[test]
    fn tau_bounds() {
        assert!(NoveltyConfig::with_tau(0.0).is_err());
        assert!(NoveltyConfig::with_tau(1.0).is_err());
        assert!(NoveltyConfig::with_tau(f64::NAN).is_err());
        assert!(NoveltyConfig::with_tau(0.5).is_ok());
    }

    #[test]
    fn pairwise_examples() {
        assert_eq!(mean_pairwise_novelty(&[]), 0.0);
        assert_eq!(mean_pairwise_novelty(&[r(&[1.0, 0.0])]), 0.0);
        let same = vec![r(&[1.0, 1.0]); 4];
        assert!(mean_pairwise_novelty(&same).abs() < 1e-12);
        let orth = [r(&[1.0, 0.0]), r(&[0.0, 1.0])];
        assert!((mean_pairwise_novelty(&orth) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn engine_indexes_admitted_and_sampled_rejects() {
        let settings = EngineSettings {
            fit_batch: 1000,
            fit_limit: 0,
            reject_stride: 4,
            ..EngineSettings::default()
        };
        let mut e = SemanticEngine::with_settings(NoveltyConfig::default(), Embedder::builtin(), settings).unwrap();
        let t = SignalTokens {
            tokens: vec!["log:a".into()],
        };
        let s = e.score(&t);
        assert_eq!(s.novelty, 1.0);
        e.observe(s, true);
        assert_eq!(e.index().len(), 1);
        for _ in 0..8 {
            let s = e.score(&t);
            e.observe(s, false);
        }
        assert_eq!(e.index().len(), 3);
    }

    #[test]
    fn engine_refits_and_reindexes() {
        let settings = EngineSettings {
            fit_batch: PCA_WARMUP as usize,
            fit_limit: 4096,
            reject_stride: 1,
            ..EngineSettings::default()
        };
        let mut e = SemanticEngine::with_settings(NoveltyConfig::default(), Embedder::builtin(), settings).unwrap();
        for i in 0..PCA_WARMUP {
            let t = SignalTokens {
                tokens: vec![format!("log:w{}", i % 97), format!("ret:n={}", i % 5)],
            };
            let s = e.score(&t);
            assert!(s.reduced.provisional);
            e.observe(s, false);
        }
        assert_eq!(e.pca().samples_seen(), PCA_WARMUP);
        assert_eq!(e.index().len(), PCA_WARMUP as usize);
        let t = SignalTokens {
            tokens: vec!["log:w3".into(), "ret:n=3".into()],
        };
        let s = e.score(&t);
        assert!(!s.reduced.provisional);
        assert!(s.novelty < 1e-9, "{}", s.novelty);
    }

    #[test]
    fn frozen_pca_refits_for_unexplained_behavior() {
        let settings = EngineSettings {
            fit_batch: PCA_WARMUP as usize,
            fit_limit: PCA_WARMUP,
            reject_stride: 1,
            refit_residual: 0.05,
        };
        let mut e = SemanticEngine::with_settings(NoveltyConfig::default(), Embedder::builtin(), settings).unwrap();
        let feed = |e: &mut SemanticEngine, word: &str| {
            for i in 0..PCA_WARMUP {
                let t = SignalTokens {
                    tokens: vec![format!("log:w{}", i % 7), format!("{word}{}", i % 3)],
                };
                let s = e.score(&t);
                e.observe(s, false);
            }
        };
        feed(&mut e, "ret:n=");
        assert_eq!(e.pca().samples_seen(), PCA_WARMUP);
        // Same behaviors again: the frozen PCA explains them.
        feed(&mut e, "ret:n=");
        assert_eq!(e.pca().samples_seen(), PCA_WARMUP);
        // Tokens it has never seen leave a residual and force one more fit.
        feed(&mut e, "exc:kind");
        assert_eq!(e.pca().samples_seen(), 2 * PCA_WARMUP);
    }
}
