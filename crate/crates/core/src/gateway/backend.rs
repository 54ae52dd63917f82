//! Backend traits and the trivial backends.

use std::sync::atomic::{AtomicUsize, Ordering};

use thiserror::Error;

use super::GatewayRequest;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    /// Worth retrying: timeouts, rate limits, server errors.
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("backend failure: {0}")]
    Permanent(String),
}

pub trait ChatBackend: Send + Sync {
    /// Provider and model identifier; part of every request hash.
    fn name(&self) -> &str;
    fn complete(&self, request: &GatewayRequest, prompt: &str) -> Result<String, BackendError>;
}

pub trait EmbeddingBackend: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError>;
}

/// Stands in for a backend during replay; every call fails.
pub struct NullBackend {
    name: String,
    dimension: usize,
}

impl NullBackend {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), dimension: 0 }
    }

    pub fn embedding(name: impl Into<String>, dimension: usize) -> Self {
        Self { name: name.into(), dimension }
    }
}

impl ChatBackend for NullBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, _: &GatewayRequest, _: &str) -> Result<String, BackendError> {
        Err(BackendError::Permanent(format!("no live backend behind `{}`", self.name)))
    }
}

impl EmbeddingBackend for NullBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, _: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        Err(BackendError::Permanent(format!("no live backend behind `{}`", self.name)))
    }
}

type Script = dyn Fn(&GatewayRequest, usize) -> Result<String, BackendError> + Send + Sync;

/// Answers from a closure that also sees the zero-based call index.
pub struct ScriptedBackend {
    name: String,
    script: Box<Script>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(
        name: impl Into<String>,
        script: impl Fn(&GatewayRequest, usize) -> Result<String, BackendError> + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), script: Box::new(script), calls: AtomicUsize::new(0) }
    }

    /// Always answers `response`.
    pub fn constant(name: impl Into<String>, response: impl Into<String>) -> Self {
        let response = response.into();
        Self::new(name, move |_, _| Ok(response.clone()))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &GatewayRequest, _: &str) -> Result<String, BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        (self.script)(request, n)
    }
}
