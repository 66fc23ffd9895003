use std::path::Path;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CandidateInput, FormatSchema, GenerationRequest, Objective, Origin, Violation};
use crate::provider::{cache_key, DiskCache, JsonClient, ProviderError};

pub const REMOTE_GEN_TIMEOUT: Duration = Duration::from_secs(10);

/// Offline stand-in for the model: objective-directed structural edits of
/// the seed, with an occasional fresh input drawn from the grammar.
#[derive(Debug, Clone)]
pub struct GrammarProvider {
    schema: FormatSchema,
    rng: ChaCha8Rng,
    fresh_rate: f64,
}

impl GrammarProvider {
    pub fn new(schema: FormatSchema, seed: u64) -> Self {
        GrammarProvider {
            schema,
            rng: ChaCha8Rng::seed_from_u64(seed),
            fresh_rate: 0.1,
        }
    }

    pub fn schema(&self) -> &FormatSchema {
        &self.schema
    }

    pub fn candidates(&mut self, seed: &[u8], objective: Objective, k: usize) -> Vec<Vec<u8>> {
        (0..k)
            .map(|_| {
                if seed.is_empty() || self.rng.random_bool(self.fresh_rate) {
                    self.schema.generate(&mut self.rng)
                } else {
                    self.schema.mutate(seed, objective, &mut self.rng)
                }
            })
            .collect()
    }
}

#[derive(Serialize)]
struct GenerateBody<'a> {
    prompt: &'a str,
    temperature: f64,
    k: usize,
}

#[derive(Serialize, Deserialize)]
struct GenerateReply {
    candidates: Vec<String>,
}

/// Client for a `/generate` endpoint returning base64 candidates.
#[derive(Debug, Clone)]
pub struct RemoteGenerator {
    client: JsonClient,
    cache: Option<DiskCache>,
    pub queries: u64,
    pub cache_hits: u64,
}

impl RemoteGenerator {
    pub fn new(endpoint: &str, cache_dir: Option<&Path>) -> Self {
        RemoteGenerator {
            client: JsonClient::new(endpoint, REMOTE_GEN_TIMEOUT),
            cache: cache_dir.map(DiskCache::new),
            queries: 0,
            cache_hits: 0,
        }
    }

    fn call(&mut self, prompt: &str, temperature: f64, k: usize) -> Result<Vec<Vec<u8>>, ProviderError> {
        let key = cache_key(&[prompt.as_bytes(), &temperature.to_le_bytes(), &(k as u64).to_le_bytes()]);
        let reply: GenerateReply = match self.cache.as_ref().and_then(|c| c.get(&key)) {
            Some(r) => {
                self.cache_hits += 1;
                r
            }
            None => {
                self.queries += 1;
                let r: GenerateReply = self.client.post("generate", &GenerateBody { prompt, temperature, k })?;
                if let Some(c) = &self.cache {
                    if let Err(e) = c.put(&key, &r) {
                        log::warn!("generation cache write failed: {e}");
                    }
                }
                r
            }
        };
        reply
            .candidates
            .iter()
            .map(|c| {
                STANDARD.decode(c).map_err(|e| ProviderError::BadResponse {
                    url: self.client.endpoint().to_string(),
                    message: format!("candidate is not base64: {e}"),
                })
            })
            .collect()
    }

    pub fn generate(&mut self, req: &GenerationRequest) -> Result<Vec<Vec<u8>>, ProviderError> {
        self.call(&req.prompt.rendered, req.temperature, req.k)
    }

    /// Asks for a single corrected version of `bytes`.
    pub fn repair(
        &mut self,
        bytes: &[u8],
        violations: &[Violation],
        schema: &FormatSchema,
    ) -> Result<Option<Vec<u8>>, ProviderError> {
        let listed: Vec<String> = violations.iter().map(|v| format!("{} at byte {}", v.rule, v.offset)).collect();
        let prompt = format!(
            "Repair this {} input so it is syntactically valid.\nInput (base64): {}\nViolations: {}\n{}\n",
            schema.format_id,
            STANDARD.encode(bytes),
            listed.join(", "),
            schema.describe()
        );
        Ok(self.call(&prompt, 0.0, 1)?.into_iter().next())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GenStats {
    pub requests: u64,
    pub fallbacks: u64,
}

/// The generation side of a helper: a remote model when configured, the
/// grammar provider otherwise or when the remote call fails.
#[derive(Debug, Clone)]
pub struct Generator {
    pub grammar: GrammarProvider,
    pub remote: Option<RemoteGenerator>,
    pub stats: GenStats,
}

impl Generator {
    pub fn offline(schema: FormatSchema, seed: u64) -> Self {
        Generator {
            grammar: GrammarProvider::new(schema, seed),
            remote: None,
            stats: GenStats::default(),
        }
    }

    pub fn with_remote(mut self, remote: RemoteGenerator) -> Self {
        self.remote = Some(remote);
        self
    }

    pub fn schema(&self) -> &FormatSchema {
        self.grammar.schema()
    }
}

/// What the offline provider mutates from when the model is not used.
#[derive(Debug, Clone, Copy)]
pub struct MutationHint<'a> {
    pub seed: &'a [u8],
    pub objective: Objective,
}

/// Produces up to `req.k` candidates, each already checked against the
/// schema.
pub fn generate(req: &GenerationRequest, generator: &mut Generator, hint: MutationHint<'_>) -> Vec<CandidateInput> {
    generator.stats.requests += 1;
    if let Some(remote) = generator.remote.as_mut() {
        match remote.generate(req) {
            Ok(list) if !list.is_empty() => {
                let schema = generator.grammar.schema();
                return list
                    .into_iter()
                    .take(req.k)
                    .map(|b| CandidateInput::checked(b, Origin::Provider, schema))
                    .collect();
            }
            Ok(_) => log::warn!("generation provider returned no candidates; using grammar fallback"),
            Err(e) => log::warn!("generation provider failed ({e}); using grammar fallback"),
        }
    }
    generator.stats.fallbacks += 1;
    let raw = generator.grammar.candidates(hint.seed, hint.objective, req.k);
    let schema = generator.grammar.schema();
    raw.into_iter()
        .map(|b| CandidateInput::checked(b, Origin::GrammarFallback, schema))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::{build_prompt, MutationContext};
    use super::*;
    use crate::provider::testserver;

    fn schema() -> FormatSchema {
        FormatSchema::parse(r#"{"format_id": "raw-bytes", "rules": {"kind": "raw_bytes", "max_len": 8}}"#).unwrap()
    }

    fn request(k: usize) -> GenerationRequest {
        let ctx = MutationContext {
            function_chain: vec!["main".into()],
            arg_types: vec![],
            observed_examples: vec![],
            param_constraints: vec![],
            input_format: "raw-bytes".into(),
        };
        GenerationRequest::new(build_prompt(&ctx, "grow", &schema()).unwrap(), 0.8, k).unwrap()
    }

    fn hint() -> MutationHint<'static> {
        MutationHint {
            seed: b"abc",
            objective: Objective::LengthGrowth,
        }
    }

    #[test]
    fn offline_fallback() {
        let mut g = Generator::offline(schema(), 3);
        let out = generate(&request(5), &mut g, hint());
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|c| c.origin == Origin::GrammarFallback && c.valid));
        assert_eq!(g.stats.fallbacks, 1);
    }

    #[test]
    fn remote_candidates_and_cache() {
        let body = serde_json::json!({"candidates": [STANDARD.encode(b"ok"), STANDARD.encode(b"way too long")]});
        let stub = testserver::serve(body.to_string(), Duration::ZERO);
        let dir = tempfile::tempdir().unwrap();
        let remote = RemoteGenerator::new(&stub.url, Some(dir.path()));
        let mut g = Generator::offline(schema(), 3).with_remote(remote);
        let out = generate(&request(2), &mut g, hint());
        assert_eq!(out[0], CandidateInput { bytes: b"ok".to_vec(), origin: Origin::Provider, valid: true });
        assert!(!out[1].valid);
        let again = generate(&request(2), &mut g, hint());
        assert_eq!(out, again);
        let r = g.remote.as_ref().unwrap();
        assert_eq!((r.queries, r.cache_hits), (1, 1));
    }

    #[test]
    fn remote_failure_falls_back() {
        let remote = RemoteGenerator::new("http://127.0.0.1:9", None);
        let mut g = Generator::offline(schema(), 3).with_remote(remote);
        let out = generate(&request(3), &mut g, hint());
        assert!(out.iter().all(|c| c.origin == Origin::GrammarFallback));
    }
}
