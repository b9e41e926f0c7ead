//! Blocking HTTP client for an external embedding service.
//!
//! Wire format: `POST {endpoint}/embed` with `{"inputs": [str]}`, answered by
//! `{"vectors": [[float]]}`.

use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Embedder, EmbeddingMatrix};
use crate::data::{apply_prefix, PrefixKind};
use crate::error::{Error, Result};

/// Environment variable holding the bearer token.
pub const TOKEN_ENV: &str = "EMBED_API_TOKEN";

const MAX_BACKOFF_MS: u64 = 8_000;
const MAX_BODY_BYTES: u64 = 1 << 30;

/// Rows of one batch, filled in by whichever worker fetched it.
type Slot = Mutex<Option<Result<Vec<Vec<f64>>>>>;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    #[serde(skip)]
    pub auth_token: Option<String>,
    pub batch_size: usize,
    pub max_retries: u32,
    pub base_backoff_ms: u64,
    pub request_timeout_ms: u64,
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            auth_token: None,
            batch_size: 512,
            max_retries: 5,
            base_backoff_ms: 250,
            request_timeout_ms: 30_000,
            max_in_flight: 4,
        }
    }
}

impl fmt::Debug for RemoteConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteConfig")
            .field("endpoint", &self.endpoint)
            .field("auth_token", &self.auth_token.as_ref().map(|_| "<redacted>"))
            .field("batch_size", &self.batch_size)
            .field("max_retries", &self.max_retries)
            .field("base_backoff_ms", &self.base_backoff_ms)
            .field("request_timeout_ms", &self.request_timeout_ms)
            .field("max_in_flight", &self.max_in_flight)
            .finish()
    }
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            ..Default::default()
        }
    }

    /// Like [`RemoteConfig::new`], taking the token from `EMBED_API_TOKEN`.
    pub fn from_env(endpoint: impl Into<String>) -> Self {
        Self {
            auth_token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            ..Self::new(endpoint)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.endpoint.is_empty() {
            return Err(Error::InvalidInput("remote endpoint is empty".into()));
        }
        if self.batch_size == 0 || self.max_in_flight == 0 {
            return Err(Error::InvalidInput(
                "batch_size and max_in_flight must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Delay before retry number `attempt + 1`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .base_backoff_ms
            .saturating_mul(1u64.checked_shl(attempt).unwrap_or(u64::MAX));
        Duration::from_millis(ms.min(MAX_BACKOFF_MS))
    }

    fn url(&self) -> String {
        format!("{}/embed", self.endpoint.trim_end_matches('/'))
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    inputs: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Request counters, cumulative over the client's lifetime.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RemoteStats {
    pub requests: usize,
    pub retries: usize,
}

pub struct RemoteEmbedder {
    cfg: RemoteConfig,
    agent: ureq::Agent,
    requests: AtomicUsize,
    retries: AtomicUsize,
}

enum Attempt {
    Retry(String),
    Fatal(Error),
}

impl RemoteEmbedder {
    pub fn new(cfg: RemoteConfig) -> Result<Self> {
        cfg.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.request_timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            cfg,
            agent,
            requests: AtomicUsize::new(0),
            retries: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    pub fn stats(&self) -> RemoteStats {
        RemoteStats {
            requests: self.requests.load(Ordering::SeqCst),
            retries: self.retries.load(Ordering::SeqCst),
        }
    }

    /// Sends a one-text probe and returns the embedding dimension.
    pub fn health_check(&self) -> Result<usize> {
        let rows = self.request(&["health check".to_string()])?;
        Ok(rows[0].len())
    }

    fn try_once(&self, inputs: &[String]) -> std::result::Result<Vec<Vec<f64>>, Attempt> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let mut req = self.agent.post(self.cfg.url());
        if let Some(t) = &self.cfg.auth_token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = match req.send_json(EmbedRequest { inputs }) {
            Ok(r) => r,
            Err(e) => return Err(Attempt::Retry(e.to_string())),
        };
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(Attempt::Fatal(Error::Transport(format!(
                "{} answered HTTP {status}",
                self.cfg.url()
            ))));
        }
        let body = resp
            .body_mut()
            .with_config()
            .limit(MAX_BODY_BYTES)
            .read_to_vec()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let parsed: EmbedResponse =
            serde_json::from_slice(&body).map_err(|e| Attempt::Fatal(Error::MalformedResponse(e.to_string())))?;
        check_rows(&parsed.vectors, inputs.len()).map_err(Attempt::Fatal)?;
        Ok(parsed.vectors)
    }

    /// One batch, with retries on transport errors and 429/5xx.
    fn request(&self, inputs: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut attempt = 0;
        loop {
            match self.try_once(inputs) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) if attempt < self.cfg.max_retries => {
                    let wait = self.cfg.backoff(attempt);
                    log::warn!("embedding request failed ({msg}), retrying in {wait:?}");
                    self.retries.fetch_add(1, Ordering::SeqCst);
                    thread::sleep(wait);
                    attempt += 1;
                }
                Err(Attempt::Retry(msg)) => {
                    return Err(Error::Transport(format!(
                        "{} failed after {} retries: {msg}",
                        self.cfg.url(),
                        self.cfg.max_retries
                    )))
                }
            }
        }
    }

    /// Embeds `texts` in batches with up to `max_in_flight` concurrent
    /// requests; rows come back in input order.
    pub fn embed_texts(&self, texts: &[String], prefix: PrefixKind) -> Result<EmbeddingMatrix> {
        if texts.is_empty() {
            return Err(Error::InvalidInput("no texts to embed".into()));
        }
        let prefixed: Vec<String> = texts.iter().map(|t| apply_prefix(prefix, t)).collect();
        let chunks: Vec<&[String]> = prefixed.chunks(self.cfg.batch_size).collect();
        let results: Vec<Slot> = chunks.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);
        let workers = self.cfg.max_in_flight.min(chunks.len());
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    if abort.load(Ordering::SeqCst) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= chunks.len() {
                        break;
                    }
                    let r = self.request(chunks[i]);
                    if r.is_err() {
                        abort.store(true, Ordering::SeqCst);
                    }
                    *results[i].lock().expect("result slot") = Some(r);
                });
            }
        });
        let mut rows = Vec::with_capacity(texts.len());
        let mut dim = None;
        for slot in results {
            match slot.into_inner().expect("result slot") {
                Some(Ok(batch)) => {
                    let d = batch[0].len();
                    if *dim.get_or_insert(d) != d {
                        return Err(Error::MalformedResponse(format!(
                            "batches disagree on dimension: {} vs {d}",
                            dim.unwrap_or(0)
                        )));
                    }
                    rows.extend(batch);
                }
                Some(Err(e)) => return Err(e),
                None => return Err(Error::Transport("request aborted after an earlier failure".into())),
            }
        }
        EmbeddingMatrix::normalize_rows(rows)
    }
}

fn check_rows(vectors: &[Vec<f64>], expected: usize) -> Result<()> {
    if vectors.len() != expected {
        return Err(Error::MalformedResponse(format!(
            "{} vectors for {expected} inputs",
            vectors.len()
        )));
    }
    let dim = vectors.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(Error::MalformedResponse("embedding dimension is zero".into()));
    }
    if let Some(i) = vectors.iter().position(|v| v.len() != dim) {
        return Err(Error::MalformedResponse(format!(
            "vector {i} has dimension {}, expected {dim}",
            vectors[i].len()
        )));
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("remote embedding".into()));
    }
    Ok(())
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, texts: &[String], prefix: PrefixKind) -> Result<EmbeddingMatrix> {
        self.embed_texts(texts, prefix)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::stub::{StubConfig, StubServer};

    fn client(server: &StubServer, batch: usize) -> RemoteEmbedder {
        RemoteEmbedder::new(RemoteConfig {
            batch_size: batch,
            base_backoff_ms: 1,
            max_retries: 3,
            ..RemoteConfig::new(server.url())
        })
        .unwrap()
    }

    fn texts(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("text {i}")).collect()
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let cfg = RemoteConfig::default();
        assert_eq!(cfg.backoff(0), Duration::from_millis(250));
        assert_eq!(cfg.backoff(2), Duration::from_millis(1000));
        assert_eq!(cfg.backoff(10), Duration::from_millis(8000));
        assert_eq!(cfg.backoff(70), Duration::from_millis(8000));
    }

    #[test]
    fn fixed_vectors_in_order() {
        let server = StubServer::start(StubConfig::fixed(vec![0.0, 3.0, 4.0])).unwrap();
        let m = client(&server, 2).embed_texts(&texts(3), PrefixKind::None).unwrap();
        assert_eq!(m.rows(), 3);
        assert_eq!(m.row(2), &[0.0, 0.6, 0.8]);
        assert_eq!(server.requests(), 2);
    }

    #[test]
    fn tagged_rows_survive_batching() {
        let server = StubServer::start(StubConfig::tagged(4)).unwrap();
        let c = client(&server, 7);
        let m = c.embed_texts(&texts(50), PrefixKind::SearchQuery).unwrap();
        for i in 0..50 {
            let r = m.row(i);
            assert!((r[0] / r[1] - (i + 1) as f64).abs() < 1e-9, "row {i}");
        }
        assert_eq!(server.requests(), 8);
        assert!(server.inputs().iter().all(|t| t.starts_with("search_query: ")));
    }

    #[test]
    fn retries_then_succeeds() {
        let server = StubServer::start(StubConfig {
            fail_first: 2,
            ..StubConfig::tagged(2)
        })
        .unwrap();
        let c = client(&server, 10);
        c.embed_texts(&texts(3), PrefixKind::None).unwrap();
        assert_eq!(
            c.stats(),
            RemoteStats {
                requests: 3,
                retries: 2
            }
        );
    }

    #[test]
    fn gives_up_after_max_retries() {
        let server = StubServer::start(StubConfig {
            fail_first: 100,
            ..StubConfig::tagged(2)
        })
        .unwrap();
        let c = client(&server, 10);
        let err = c.embed_texts(&texts(3), PrefixKind::None).unwrap_err();
        assert!(err.is_transport());
        assert_eq!(server.requests(), 4);
    }

    #[test]
    fn health_check_cases() {
        let server = StubServer::start(StubConfig::tagged(64)).unwrap();
        assert_eq!(client(&server, 1).health_check().unwrap(), 64);
        let empty = StubServer::start(StubConfig::fixed(vec![])).unwrap();
        assert!(matches!(
            client(&empty, 1).health_check(),
            Err(Error::MalformedResponse(_))
        ));
        let dead = StubServer::dead_url();
        assert!(client_for(&dead).health_check().unwrap_err().is_transport());
    }

    fn client_for(url: &str) -> RemoteEmbedder {
        RemoteEmbedder::new(RemoteConfig {
            base_backoff_ms: 1,
            max_retries: 1,
            ..RemoteConfig::new(url)
        })
        .unwrap()
    }

    #[test]
    fn bearer_token_is_sent() {
        let server = StubServer::start(StubConfig::tagged(2)).unwrap();
        let c = RemoteEmbedder::new(RemoteConfig {
            auth_token: Some("s3cret".into()),
            ..RemoteConfig::new(server.url())
        })
        .unwrap();
        c.embed_texts(&texts(1), PrefixKind::None).unwrap();
        assert_eq!(server.auth_headers(), vec!["Bearer s3cret".to_string()]);
        assert!(!format!("{:?}", c.config()).contains("s3cret"));
    }
}
