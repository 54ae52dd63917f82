//! The single network boundary: chat completions and embeddings behind a
//! content-addressed record/replay cache.

pub mod backend;
pub mod cache;
pub mod config;
pub mod http;
pub mod lexicon;
pub mod payload;
pub mod simulated;
pub mod templates;

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use backend::{BackendError, ChatBackend, EmbeddingBackend, NullBackend, ScriptedBackend};
pub use cache::{CacheError, ResponseCache, Transcript};
pub use config::{Backends, GatewayConfig};
pub use simulated::{LexiconEmbedder, SimulatedProvider};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("unknown prompt template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{template_id}` needs variable `{name}`")]
    MissingVariable { template_id: String, name: String },
    #[error("replay cache has no entry for {template_id} ({hash})")]
    ReplayMiss { template_id: String, hash: String },
    #[error("backend `{backend}` still failing after {attempts} attempts: {last}")]
    RetriesExhausted { backend: String, attempts: u32, last: String },
    #[error("backend `{backend}`: {message}")]
    Backend { backend: String, message: String },
    #[error("unparseable structured output from {template_id}: {reason}")]
    StructuredOutput { template_id: String, raw: String, reason: String },
    #[error("embedding backend `{backend}` returned dimension {got}, expected {expected}")]
    Dimension { backend: String, expected: usize, got: usize },
    #[error(transparent)]
    Cache(#[from] CacheError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Generator,
    Judge,
    Embedder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    temperature: f64,
    max_output: u32,
}

impl Default for Decoding {
    fn default() -> Self {
        Self { temperature: 0.0, max_output: 2048 }
    }
}

impl Decoding {
    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn max_output(&self) -> u32 {
        self.max_output
    }
}

/// A templated request. Temperature is always 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayRequest {
    role: Role,
    template_id: String,
    variables: BTreeMap<String, String>,
    decoding: Decoding,
}

#[derive(Serialize)]
struct HashInput<'a> {
    backend: &'a str,
    decoding: &'a Decoding,
    template_id: &'a str,
    variables: &'a BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl GatewayRequest {
    pub fn new(role: Role, template_id: &str) -> Result<Self, GatewayError> {
        if templates::template(template_id).is_none() {
            return Err(GatewayError::UnknownTemplate(template_id.to_string()));
        }
        Ok(Self { role, template_id: template_id.to_string(), variables: BTreeMap::new(), decoding: Decoding::default() })
    }

    pub fn var(mut self, name: &str, value: impl Into<String>) -> Self {
        self.variables.insert(name.to_string(), value.into());
        self
    }

    /// Sets a variable to the compact JSON encoding of `value`.
    pub fn json_var(self, name: &str, value: &impl Serialize) -> Self {
        let text = serde_json::to_string(value).expect("prompt variables serialize");
        self.var(name, text)
    }

    pub fn with_max_output(mut self, max_output: u32) -> Self {
        self.decoding.max_output = max_output;
        self
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn template_id(&self) -> &str {
        &self.template_id
    }

    pub fn variables(&self) -> &BTreeMap<String, String> {
        &self.variables
    }

    pub fn variable(&self, name: &str) -> Option<&str> {
        self.variables.get(name).map(String::as_str)
    }

    /// Parses a JSON-valued variable.
    pub fn json_variable<T: DeserializeOwned>(&self, name: &str) -> Option<T> {
        self.variable(name).and_then(|v| serde_json::from_str(v).ok())
    }

    pub fn decoding(&self) -> &Decoding {
        &self.decoding
    }

    /// Content hash over template, variables, decoding and backend name.
    pub fn hash(&self, backend: &str) -> String {
        let input = HashInput {
            backend,
            decoding: &self.decoding,
            template_id: &self.template_id,
            variables: &self.variables,
        };
        sha256_hex(serde_json::to_string(&input).expect("hash input serializes").as_bytes())
    }

    pub fn prompt(&self) -> Result<String, GatewayError> {
        templates::render(&self.template_id, &self.variables)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheMode {
    /// Serve from the cache only; a miss is an error.
    Replay,
    /// Serve hits from the cache and record misses from the backend.
    Record,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    pub fn immediate(max_retries: u32) -> Self {
        Self { max_retries, base_delay: Duration::ZERO }
    }

    fn run<T>(&self, backend: &str, limiter: &RateLimiter, mut call: impl FnMut() -> Result<T, BackendError>) -> Result<T, GatewayError> {
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            limiter.acquire();
            match call() {
                Ok(v) => return Ok(v),
                Err(BackendError::Permanent(message)) => {
                    return Err(GatewayError::Backend { backend: backend.to_string(), message })
                }
                Err(BackendError::Transient(message)) => {
                    log::warn!("{backend}: attempt {} failed: {message}", attempt + 1);
                    last = message;
                    if attempt < self.max_retries {
                        std::thread::sleep(self.base_delay * 2u32.saturating_pow(attempt));
                    }
                }
            }
        }
        Err(GatewayError::RetriesExhausted { backend: backend.to_string(), attempts: self.max_retries + 1, last })
    }
}

/// Enforces a minimum spacing between requests to one backend.
pub struct RateLimiter {
    interval: Option<Duration>,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn unlimited() -> Self {
        Self { interval: None, next: Mutex::new(Instant::now()) }
    }

    pub fn per_second(requests: f64) -> Self {
        let interval = (requests > 0.0).then(|| Duration::from_secs_f64(1.0 / requests));
        Self { interval, next: Mutex::new(Instant::now()) }
    }

    pub fn acquire(&self) {
        let Some(interval) = self.interval else { return };
        let wait = {
            let mut next = self.next.lock().unwrap();
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + interval;
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// Hashes of the transcripts used while producing one unit of work.
#[derive(Debug, Clone, Default)]
pub struct TranscriptLog(Arc<Mutex<Vec<String>>>);

impl TranscriptLog {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, hash: &str) {
        self.0.lock().unwrap().push(hash.to_string());
    }

    pub fn hashes(&self) -> Vec<String> {
        self.0.lock().unwrap().clone()
    }
}

/// Strips an optional Markdown code fence and parses the rest as `T`.
pub fn parse_structured<T: DeserializeOwned>(raw: &str) -> Result<T, String> {
    let mut body = raw.trim();
    if let Some(rest) = body.strip_prefix("```") {
        let rest = rest.strip_prefix("json").unwrap_or(rest);
        body = rest.strip_suffix("```").unwrap_or(rest).trim();
    }
    serde_json::from_str(body).map_err(|e| e.to_string())
}

/// Handle on one chat backend. Clones share the backend, cache and limiter.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    cache: Arc<ResponseCache>,
    mode: CacheMode,
    retry: RetryPolicy,
    limiter: Arc<RateLimiter>,
    log: Option<TranscriptLog>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, cache: Arc<ResponseCache>, mode: CacheMode) -> Self {
        Self { backend, cache, mode, retry: RetryPolicy::default(), limiter: Arc::new(RateLimiter::unlimited()), log: None }
    }

    /// Replay-only handle for a backend recorded under `name`.
    pub fn replay(name: &str, cache: Arc<ResponseCache>) -> Self {
        Self::new(Arc::new(NullBackend::new(name)), cache, CacheMode::Replay)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, requests_per_second: f64) -> Self {
        self.limiter = Arc::new(RateLimiter::per_second(requests_per_second));
        self
    }

    /// Same backend, recording used transcript hashes into `log`.
    pub fn with_log(&self, log: &TranscriptLog) -> Self {
        let mut g = self.clone();
        g.log = Some(log.clone());
        g
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn cache(&self) -> &Arc<ResponseCache> {
        &self.cache
    }

    pub fn complete(&self, request: &GatewayRequest) -> Result<String, GatewayError> {
        let name = self.backend.name();
        let hash = request.hash(name);
        let transcript = match self.cache.get(&hash) {
            Some(t) => t,
            None => {
                if self.mode == CacheMode::Replay {
                    return Err(GatewayError::ReplayMiss { template_id: request.template_id.clone(), hash });
                }
                let prompt = request.prompt()?;
                let response = self.retry.run(name, &self.limiter, || self.backend.complete(request, &prompt))?;
                self.cache.insert(Transcript::now(hash, response, name.to_string()))?
            }
        };
        if let Some(log) = &self.log {
            log.push(&transcript.hash);
        }
        Ok(transcript.response)
    }

    /// Completes and parses strictly; one retry with a format reminder.
    pub fn complete_json<T: DeserializeOwned>(&self, request: &GatewayRequest) -> Result<T, GatewayError> {
        let raw = self.complete(request)?;
        if let Ok(v) = parse_structured(&raw) {
            return Ok(v);
        }
        let retry = request.clone().var(templates::FORMAT_REMINDER, templates::FORMAT_REMINDER_TEXT);
        let raw = self.complete(&retry)?;
        parse_structured(&raw).map_err(|reason| GatewayError::StructuredOutput {
            template_id: request.template_id.clone(),
            raw,
            reason,
        })
    }
}

#[derive(Serialize)]
struct EmbedHashInput<'a> {
    backend: &'a str,
    dimension: usize,
    kind: &'static str,
    text: &'a str,
}

/// Handle on one embedding backend with the same caching contract as
/// [`Gateway`].
#[derive(Clone)]
pub struct Embedder {
    backend: Arc<dyn EmbeddingBackend>,
    cache: Arc<ResponseCache>,
    mode: CacheMode,
    retry: RetryPolicy,
    limiter: Arc<RateLimiter>,
}

impl Embedder {
    pub fn new(backend: Arc<dyn EmbeddingBackend>, cache: Arc<ResponseCache>, mode: CacheMode) -> Self {
        Self { backend, cache, mode, retry: RetryPolicy::default(), limiter: Arc::new(RateLimiter::unlimited()) }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, requests_per_second: f64) -> Self {
        self.limiter = Arc::new(RateLimiter::per_second(requests_per_second));
        self
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn dimension(&self) -> usize {
        self.backend.dimension()
    }

    fn key(&self, text: &str) -> String {
        let input = EmbedHashInput { backend: self.backend.name(), dimension: self.dimension(), kind: "embed", text };
        sha256_hex(serde_json::to_string(&input).expect("hash input serializes").as_bytes())
    }

    fn decode(&self, t: &Transcript) -> Result<Vec<f32>, GatewayError> {
        let v: Vec<f32> = serde_json::from_str(&t.response).map_err(|e| GatewayError::StructuredOutput {
            template_id: "embed".into(),
            raw: t.response.clone(),
            reason: e.to_string(),
        })?;
        self.check_dimension(v.len())?;
        Ok(v)
    }

    fn check_dimension(&self, got: usize) -> Result<(), GatewayError> {
        if got != self.dimension() {
            return Err(GatewayError::Dimension { backend: self.backend.name().into(), expected: self.dimension(), got });
        }
        Ok(())
    }

    /// One vector per input text, in order.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        let keys: Vec<String> = texts.iter().map(|t| self.key(t)).collect();
        let mut found: HashMap<&str, Vec<f32>> = HashMap::new();
        let mut missing: Vec<(&str, &String)> = Vec::new();
        for (key, text) in keys.iter().zip(texts) {
            if found.contains_key(key.as_str()) || missing.iter().any(|(k, _)| *k == key) {
                continue;
            }
            match self.cache.get(key) {
                Some(t) => {
                    found.insert(key, self.decode(&t)?);
                }
                None => missing.push((key, text)),
            }
        }
        if !missing.is_empty() {
            if self.mode == CacheMode::Replay {
                return Err(GatewayError::ReplayMiss { template_id: "embed".into(), hash: missing[0].0.to_string() });
            }
            let batch: Vec<String> = missing.iter().map(|(_, t)| (*t).clone()).collect();
            let name = self.backend.name();
            let vectors = self.retry.run(name, &self.limiter, || self.backend.embed(&batch))?;
            if vectors.len() != batch.len() {
                return Err(GatewayError::Backend {
                    backend: name.into(),
                    message: format!("{} vectors for {} texts", vectors.len(), batch.len()),
                });
            }
            for ((key, _), v) in missing.iter().zip(vectors) {
                self.check_dimension(v.len())?;
                let response = serde_json::to_string(&v).expect("vectors serialize");
                let stored = self.cache.insert(Transcript::now(key.to_string(), response, name.to_string()))?;
                found.insert(key, self.decode(&stored)?);
            }
        }
        Ok(keys.iter().map(|k| found[k.as_str()].clone()).collect())
    }
}
