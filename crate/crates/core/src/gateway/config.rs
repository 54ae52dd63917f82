//! Backend configuration from a TOML file plus environment overrides.
//!
//! ```toml
//! requests_per_second = 2.0
//!
//! [generator]
//! provider = "openai"
//! api_base = "https://api.openai.com/v1"
//! model = "gpt-4o"
//! api_key_env = "OPENAI_API_KEY"
//! extra = { reasoning_effort = "medium" }
//!
//! [[judges]]
//! provider = "simulated"
//! name = "simulated:judge-1"
//!
//! [embedding]
//! provider = "lexicon"
//! ```
//!
//! `AUBENCH_API_BASE`, `AUBENCH_API_KEY` and `AUBENCH_MODEL` override the
//! generator's settings.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{Map, Value};
use thiserror::Error;

use super::http::{Endpoint, HttpChat, HttpEmbedding};
use super::simulated::{LexiconEmbedder, SimulatedProvider, LEXICON_DIMENSION};
use super::{CacheMode, ChatBackend, Embedder, EmbeddingBackend, Gateway, NullBackend, ResponseCache, RetryPolicy};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {}: {source}", path.display())]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("environment variable {0} is not set")]
    MissingKey(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    Openai,
    Simulated,
    Lexicon,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub provider: Provider,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub api_base: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub dimension: Option<usize>,
    #[serde(default)]
    pub timeout_secs: Option<u64>,
    #[serde(default)]
    pub extra: Map<String, Value>,
}

impl BackendConfig {
    pub fn simulated(name: &str) -> Self {
        Self {
            provider: Provider::Simulated,
            name: Some(name.to_string()),
            api_base: None,
            model: None,
            api_key_env: None,
            dimension: None,
            timeout_secs: None,
            extra: Map::new(),
        }
    }

    fn lexicon() -> Self {
        Self { provider: Provider::Lexicon, ..Self::simulated("lexicon:64") }
    }

    pub fn name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match self.provider {
            Provider::Openai => format!("openai:{}", self.model.as_deref().unwrap_or("unknown")),
            Provider::Simulated => "simulated".to_string(),
            Provider::Lexicon => format!("lexicon:{LEXICON_DIMENSION}"),
        }
    }

    fn endpoint(&self) -> Result<Endpoint, ConfigError> {
        let api_base = self
            .api_base
            .clone()
            .ok_or_else(|| ConfigError::Invalid(format!("backend `{}` needs api_base", self.name())))?;
        let model =
            self.model.clone().ok_or_else(|| ConfigError::Invalid(format!("backend `{}` needs model", self.name())))?;
        let api_key = match &self.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ConfigError::MissingKey(var.clone()))?),
            None => None,
        };
        Ok(Endpoint {
            name: self.name(),
            api_base,
            model,
            api_key,
            extra: self.extra.clone(),
            timeout: Duration::from_secs(self.timeout_secs.unwrap_or(120)),
        })
    }
}

fn default_judges() -> Vec<BackendConfig> {
    (1..=3).map(|i| BackendConfig::simulated(&format!("simulated:judge-{i}"))).collect()
}

fn default_generator() -> BackendConfig {
    BackendConfig::simulated("simulated:generator")
}

fn default_retries() -> u32 {
    3
}

fn default_backoff() -> u64 {
    500
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default = "default_generator")]
    pub generator: BackendConfig,
    #[serde(default = "default_judges")]
    pub judges: Vec<BackendConfig>,
    #[serde(default)]
    pub embedding: Option<BackendConfig>,
    #[serde(default)]
    pub requests_per_second: Option<f64>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    /// Permit the generator model to also sit on the judge panel.
    #[serde(default)]
    pub allow_generator_as_judge: bool,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            generator: default_generator(),
            judges: default_judges(),
            embedding: None,
            requests_per_second: None,
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
            allow_generator_as_judge: false,
        }
    }
}

/// Connected handles for one run.
#[derive(Clone)]
pub struct Backends {
    pub generator: Gateway,
    pub judges: Vec<Gateway>,
    pub embedder: Embedder,
}

impl GatewayConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut config: Self =
            toml::from_str(text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })?;
        config.apply_env();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text, path)
    }

    fn apply_env(&mut self) {
        if self.generator.provider != Provider::Openai {
            return;
        }
        if let Ok(v) = std::env::var("AUBENCH_API_BASE") {
            self.generator.api_base = Some(v);
        }
        if let Ok(v) = std::env::var("AUBENCH_MODEL") {
            self.generator.model = Some(v);
        }
        if std::env::var("AUBENCH_API_KEY").is_ok() {
            self.generator.api_key_env = Some("AUBENCH_API_KEY".into());
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.judges.is_empty() {
            return Err(ConfigError::Invalid("at least one judge is required".into()));
        }
        if self.generator.provider == Provider::Lexicon || self.judges.iter().any(|j| j.provider == Provider::Lexicon) {
            return Err(ConfigError::Invalid("the lexicon provider only serves embeddings".into()));
        }
        if self.embedding.as_ref().is_some_and(|e| e.provider == Provider::Simulated) {
            return Err(ConfigError::Invalid("use provider = \"lexicon\" for offline embeddings".into()));
        }
        let generator = self.generator.name();
        if !self.allow_generator_as_judge && self.judges.iter().any(|j| j.name() == generator) {
            return Err(ConfigError::Invalid(format!(
                "judge `{generator}` is also the generator; set allow_generator_as_judge to permit this"
            )));
        }
        let mut names: Vec<String> = self.judges.iter().map(BackendConfig::name).collect();
        names.sort();
        names.dedup();
        if names.len() != self.judges.len() {
            return Err(ConfigError::Invalid("judge names must be distinct".into()));
        }
        Ok(())
    }

    fn chat(&self, b: &BackendConfig, cache: &Arc<ResponseCache>, mode: CacheMode) -> Result<Gateway, ConfigError> {
        let backend: Arc<dyn ChatBackend> = match (mode, b.provider) {
            (CacheMode::Replay, _) => Arc::new(NullBackend::new(b.name())),
            (_, Provider::Openai) => Arc::new(HttpChat::new(b.endpoint()?)),
            (_, _) => Arc::new(SimulatedProvider::new(b.name())),
        };
        let mut g = Gateway::new(backend, cache.clone(), mode)
            .with_retry(RetryPolicy { max_retries: self.max_retries, base_delay: Duration::from_millis(self.backoff_ms) });
        if let Some(rps) = self.requests_per_second {
            g = g.with_rate_limit(rps);
        }
        Ok(g)
    }

    pub fn connect(&self, cache: Arc<ResponseCache>, mode: CacheMode) -> Result<Backends, ConfigError> {
        let generator = self.chat(&self.generator, &cache, mode)?;
        let judges = self.judges.iter().map(|j| self.chat(j, &cache, mode)).collect::<Result<Vec<_>, _>>()?;
        let e = self.embedding.clone().unwrap_or_else(BackendConfig::lexicon);
        let backend: Arc<dyn EmbeddingBackend> = match (mode, e.provider) {
            (_, Provider::Lexicon) => Arc::new(LexiconEmbedder::new()),
            (CacheMode::Replay, _) => Arc::new(NullBackend::embedding(
                e.name(),
                e.dimension.ok_or_else(|| ConfigError::Invalid("embedding needs dimension".into()))?,
            )),
            (_, _) => Arc::new(HttpEmbedding::new(
                e.endpoint()?,
                e.dimension.ok_or_else(|| ConfigError::Invalid("embedding needs dimension".into()))?,
            )),
        };
        let mut embedder = Embedder::new(backend, cache, mode)
            .with_retry(RetryPolicy { max_retries: self.max_retries, base_delay: Duration::from_millis(self.backoff_ms) });
        if let Some(rps) = self.requests_per_second {
            embedder = embedder.with_rate_limit(rps);
        }
        Ok(Backends { generator, judges, embedder })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_offline() {
        let c = GatewayConfig::default();
        c.validate().unwrap();
        let b = c.connect(Arc::new(ResponseCache::in_memory()), CacheMode::Record).unwrap();
        assert_eq!(b.generator.backend_name(), "simulated:generator");
        assert_eq!(b.judges.len(), 3);
        assert_eq!(b.embedder.dimension(), LEXICON_DIMENSION);
    }

    #[test]
    fn parses_http_backends() {
        let text = r#"
            requests_per_second = 5.0
            [generator]
            provider = "openai"
            api_base = "http://localhost:1/v1"
            model = "gpt-x"
            extra = { reasoning_effort = "medium" }
            [[judges]]
            provider = "simulated"
            name = "simulated:judge-a"
            [embedding]
            provider = "openai"
            api_base = "http://localhost:1/v1"
            model = "emb"
            dimension = 8
        "#;
        let c = GatewayConfig::from_toml(text, Path::new("x.toml")).unwrap();
        assert_eq!(c.generator.name(), "openai:gpt-x");
        assert_eq!(c.generator.extra["reasoning_effort"], "medium");
        let b = c.connect(Arc::new(ResponseCache::in_memory()), CacheMode::Replay).unwrap();
        assert_eq!(b.embedder.dimension(), 8);
    }

    #[test]
    fn generator_cannot_judge_by_default() {
        let text = "[generator]\nprovider = \"simulated\"\nname = \"same\"\n[[judges]]\nprovider = \"simulated\"\nname = \"same\"\n";
        assert!(matches!(GatewayConfig::from_toml(text, Path::new("x")), Err(ConfigError::Invalid(_))));
        let allowed = format!("allow_generator_as_judge = true\n{text}");
        GatewayConfig::from_toml(&allowed, Path::new("x")).unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(GatewayConfig::from_toml("bogus = 1", Path::new("x")), Err(ConfigError::Parse { .. })));
    }
}
