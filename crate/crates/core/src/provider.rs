//! Plumbing shared by the remote embedding and generation providers: a small
//! blocking JSON-over-HTTP client and a content-addressed on-disk cache.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider request to {url} failed: {message}")]
    Transport { url: String, message: String },
    #[error("provider at {url} returned an unusable response: {message}")]
    BadResponse { url: String, message: String },
    #[error("no provider configured")]
    NotConfigured,
}

/// POSTs JSON to `<endpoint>/<route>` with a hard overall timeout.
#[derive(Clone)]
pub struct JsonClient {
    endpoint: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for JsonClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JsonClient").field("endpoint", &self.endpoint).finish()
    }
}

impl JsonClient {
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build();
        JsonClient {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            agent: ureq::Agent::new_with_config(config),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn post<B: Serialize, R: DeserializeOwned>(&self, route: &str, body: &B) -> Result<R, ProviderError> {
        let url = format!("{}/{}", self.endpoint, route.trim_start_matches('/'));
        let response = self
            .agent
            .post(&url)
            .send_json(body)
            .map_err(|e| ProviderError::Transport {
                url: url.clone(),
                message: e.to_string(),
            })?;
        response
            .into_body()
            .read_json::<R>()
            .map_err(|e| ProviderError::BadResponse {
                url,
                message: e.to_string(),
            })
    }
}

/// JSON values stored under `<dir>/<sha256-hex>.json`.
///
/// Writes go through a temp file and a rename, so concurrent readers never
/// see a partial entry.
#[derive(Debug, Clone)]
pub struct DiskCache {
    dir: PathBuf,
}

pub fn cache_key(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl DiskCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DiskCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Option<T> {
        let text = std::fs::read(self.dir.join(format!("{key}.json"))).ok()?;
        serde_json::from_slice(&text).ok()
    }

    pub fn put<T: Serialize>(&self, key: &str, value: &T) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let tmp = self.dir.join(format!(".{key}.{}.tmp", std::process::id()));
        std::fs::write(&tmp, serde_json::to_vec(value)?)?;
        std::fs::rename(&tmp, self.dir.join(format!("{key}.json")))
    }
}

#[cfg(test)]
pub(crate) mod testserver {
    //! One-thread HTTP stub for provider tests.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    use std::time::Duration;

    pub struct Stub {
        pub url: String,
        pub hits: Arc<AtomicUsize>,
    }

    /// Serves `body` to every request after sleeping `delay`.
    pub fn serve(body: String, delay: Duration) -> Stub {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                counter.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                }
                let mut buf = vec![0u8; len];
                let _ = reader.read_exact(&mut buf);
                std::thread::sleep(delay);
                let _ = write!(
                    stream,
                    "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                    body.len(),
                    body
                );
            }
        });
        Stub { url, hits }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let c = DiskCache::new(dir.path().join("c"));
        let k = cache_key(&[b"a", b"b"]);
        assert_eq!(c.get::<Vec<u32>>(&k), None);
        c.put(&k, &vec![1u32, 2]).unwrap();
        assert_eq!(c.get::<Vec<u32>>(&k), Some(vec![1, 2]));
        assert_ne!(k, cache_key(&[b"ab"]));
    }

    #[test]
    fn client_posts_json() {
        let stub = testserver::serve(r#"{"ok": 7}"#.into(), Duration::ZERO);
        let c = JsonClient::new(&stub.url, Duration::from_secs(2));
        let v: serde_json::Value = c.post("/x", &serde_json::json!({"a": 1})).unwrap();
        assert_eq!(v["ok"], 7);
    }

    #[test]
    fn client_times_out() {
        let stub = testserver::serve("{}".into(), Duration::from_millis(600));
        let c = JsonClient::new(&stub.url, Duration::from_millis(100));
        let r: Result<serde_json::Value, _> = c.post("x", &1);
        assert!(matches!(r, Err(ProviderError::Transport { .. })));
    }
}
