use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::hash::{fnv1a64, mix64};
use crate::provider::{cache_key, DiskCache, JsonClient, ProviderError};
use crate::signals::SignalTokens;

/// Embedding width.
pub const EMBED_DIM: usize = 768;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vector: Vec<f64>,
}

impl Embedding {
    pub fn zeros() -> Self {
        Embedding {
            vector: vec![0.0; EMBED_DIM],
        }
    }

    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Scales to unit length; the zero vector stays zero.
    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self.vector.iter_mut().for_each(|x| *x /= n);
        }
        self
    }
}

/// Signed feature hashing: each token adds ±1 to one of [`EMBED_DIM`] bins,
/// then the vector is L2-normalized.
pub fn embed(tokens: &SignalTokens) -> Embedding {
    let mut vector = vec![0.0; EMBED_DIM];
    for t in &tokens.tokens {
        let h = mix64(fnv1a64(t.as_bytes()));
        let idx = (h % EMBED_DIM as u64) as usize;
        vector[idx] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
    Embedding { vector }.normalized()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    #[default]
    BuiltinHash,
    Remote,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    tokens: &'a [String],
}

#[derive(Serialize, Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

/// Client for an external `/embed` service, with an optional response cache.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    client: JsonClient,
    cache: Option<DiskCache>,
}

pub const REMOTE_EMBED_TIMEOUT: Duration = Duration::from_secs(2);

impl RemoteEmbedder {
    pub fn new(endpoint: &str, cache_dir: Option<PathBuf>) -> Self {
        Self::with_timeout(endpoint, cache_dir, REMOTE_EMBED_TIMEOUT)
    }

    pub fn with_timeout(endpoint: &str, cache_dir: Option<PathBuf>, timeout: Duration) -> Self {
        RemoteEmbedder {
            client: JsonClient::new(endpoint, timeout),
            cache: cache_dir.map(DiskCache::new),
        }
    }

    pub fn embed(&self, tokens: &SignalTokens) -> Result<Embedding, ProviderError> {
        let parts: Vec<&[u8]> = tokens.tokens.iter().map(|t| t.as_bytes()).collect();
        let key = cache_key(&parts);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get::<EmbedResponse>(&key)) {
            return Ok(Embedding { vector: hit.vector }.normalized());
        }
        let resp: EmbedResponse = self.client.post(
            "embed",
            &EmbedRequest {
                tokens: &tokens.tokens,
            },
        )?;
        if resp.vector.len() != EMBED_DIM || resp.vector.iter().any(|x| !x.is_finite()) {
            return Err(ProviderError::BadResponse {
                url: self.client.endpoint().to_string(),
                message: format!("expected {EMBED_DIM} finite floats, got {}", resp.vector.len()),
            });
        }
        if let Some(c) = &self.cache {
            if let Err(e) = c.put(&key, &resp) {
                log::warn!("embed cache write failed: {e}");
            }
        }
        Ok(Embedding { vector: resp.vector }.normalized())
    }
}

/// Embedding front end: the remote service when configured, the builtin
/// hasher otherwise or whenever the remote call fails.
#[derive(Debug, Clone, Default)]
pub struct Embedder {
    remote: Option<RemoteEmbedder>,
    fallbacks: u64,
}

impl Embedder {
    pub fn builtin() -> Self {
        Embedder::default()
    }

    pub fn remote(remote: RemoteEmbedder) -> Self {
        Embedder {
            remote: Some(remote),
            fallbacks: 0,
        }
    }

    pub fn kind(&self) -> EmbedderKind {
        if self.remote.is_some() {
            EmbedderKind::Remote
        } else {
            EmbedderKind::BuiltinHash
        }
    }

    pub fn fallbacks(&self) -> u64 {
        self.fallbacks
    }

    pub fn embed(&mut self, tokens: &SignalTokens) -> Embedding {
        if let Some(r) = &self.remote {
            match r.embed(tokens) {
                Ok(e) => return e,
                Err(e) => {
                    self.fallbacks += 1;
                    log::debug!("remote embedder unavailable, using builtin: {e}");
                }
            }
        }
        embed(tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::testserver;

    fn toks(v: &[&str]) -> SignalTokens {
        SignalTokens {
            tokens: v.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn cos(a: &Embedding, b: &Embedding) -> f64 {
        let dot: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
        dot / (a.norm() * b.norm())
    }

    #[test]
    fn empty_tokens_zero_vector() {
        let e = embed(&SignalTokens::default());
        assert_eq!(e.vector.len(), EMBED_DIM);
        assert!(e.vector.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn deterministic_and_unit() {
        let t = toks(&["log:a", "ret:x=4", "exc:boom"]);
        let a = embed(&t);
        assert_eq!(a, embed(&t));
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_token_of_hundred_stays_close() {
        let base: Vec<String> = (0..100).map(|i| format!("log:w{i}")).collect();
        let mut other = base.clone();
        other[37] = "log:different".into();
        let a = embed(&SignalTokens { tokens: base });
        let b = embed(&SignalTokens { tokens: other });
        let c = cos(&a, &b);
        assert!(c >= 0.9, "cosine {c}");
    }

    #[test]
    fn remote_success_and_cache() {
        let vector: Vec<f64> = (0..EMBED_DIM).map(|i| if i == 3 { 2.0 } else { 0.0 }).collect();
        let stub = testserver::serve(
            serde_json::json!({ "vector": vector }).to_string(),
            Duration::ZERO,
        );
        let dir = tempfile::tempdir().unwrap();
        let r = RemoteEmbedder::new(&stub.url, Some(dir.path().join("embed")));
        let e = r.embed(&toks(&["a"])).unwrap();
        assert_eq!(e.vector[3], 1.0);
        let again = r.embed(&toks(&["a"])).unwrap();
        assert_eq!(e, again);
        assert_eq!(stub.hits.load(std::sync::atomic::Ordering::SeqCst), 1);
    }

    #[test]
    fn remote_wrong_width_rejected_and_fallback_used() {
        let stub = testserver::serve(r#"{"vector": [1.0, 2.0]}"#.into(), Duration::ZERO);
        let r = RemoteEmbedder::new(&stub.url, None);
        assert!(matches!(
            r.embed(&toks(&["a"])),
            Err(ProviderError::BadResponse { .. })
        ));
        let mut e = Embedder::remote(r);
        assert_eq!(e.embed(&toks(&["a"])), embed(&toks(&["a"])));
        assert_eq!(e.fallbacks(), 1);
    }

    #[test]
    fn unreachable_remote_falls_back() {
        let r = RemoteEmbedder::with_timeout("http://127.0.0.1:9", None, Duration::from_millis(200));
        let mut e = Embedder::remote(r);
        let t = toks(&["x"]);
        assert_eq!(e.embed(&t), embed(&t));
        assert_eq!(e.kind(), EmbedderKind::Remote);
    }
}
