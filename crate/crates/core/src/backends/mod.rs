//! Image-to-text, text-to-image and embedding providers.
//!
//! Real models sit behind a small JSON-over-HTTP protocol ([`http`]); the
//! [`mock`] providers are pure functions used for offline sweeps and tests.

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagecore::ImageBuffer;
use crate::metrics::Embedding;
use crate::text_channel::TextMessage;

pub mod http;
pub mod mock;
pub mod stub;
pub mod wire;

pub use http::HttpBackend;
pub use mock::{MockCaptioner, MockEmbedder, MockGenerator};
pub use stub::{StubConfig, StubServer};

pub const MIN_GENERATION_SIDE: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendErrorKind {
    /// Connection could not be established; nothing was sent.
    Unreachable { message: String },
    Timeout,
    /// Non-200 response; `message` is the server's `error` field when present.
    Status { code: u16, message: String },
    /// Malformed or unexpected response body.
    Protocol { message: String },
    /// I/O failure after the request may have reached the server.
    Transport { message: String },
    /// Request rejected locally before it was sent.
    InvalidRequest { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub struct BackendError {
    pub provider: String,
    pub kind: BackendErrorKind,
}

impl BackendError {
    pub fn new(provider: impl Into<String>, kind: BackendErrorKind) -> Self {
        Self {
            provider: provider.into(),
            kind,
        }
    }

    pub fn is_unreachable(&self) -> bool {
        matches!(self.kind, BackendErrorKind::Unreachable { .. })
    }
}

impl fmt::Display for BackendError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            BackendErrorKind::Unreachable { message } => {
                write!(f, "{}: unreachable: {message}", self.provider)
            }
            BackendErrorKind::Timeout => write!(f, "{}: timed out", self.provider),
            BackendErrorKind::Status { code, message } => {
                write!(f, "{}: HTTP {code}: {message}", self.provider)
            }
            BackendErrorKind::Protocol { message } => {
                write!(f, "{}: protocol error: {message}", self.provider)
            }
            BackendErrorKind::Transport { message } => {
                write!(f, "{}: transport error: {message}", self.provider)
            }
            BackendErrorKind::InvalidRequest { message } => {
                write!(f, "{}: invalid request: {message}", self.provider)
            }
        }
    }
}

/// Connection settings for one model server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendEndpoint {
    pub base_url: String,
    /// Whole-request timeout in seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    #[serde(default)]
    pub auth_token: Option<String>,
    /// Extra attempts after a transport-level failure.
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_timeout() -> f64 {
    120.0
}

fn default_max_parallel() -> usize {
    4
}

fn default_retries() -> u32 {
    2
}

impl BackendEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            timeout: default_timeout(),
            max_parallel: default_max_parallel(),
            auth_token: None,
            retries: default_retries(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(format!("timeout must be positive, got {}", self.timeout));
        }
        if self.max_parallel == 0 {
            return Err("max_parallel must be at least 1".into());
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(format!("base_url {:?} is not an http(s) URL", self.base_url));
        }
        Ok(())
    }

    pub fn timeout_duration(&self) -> Duration {
        Duration::from_secs_f64(self.timeout)
    }
}

/// One text-to-image request. The seed realizes the generator's
/// stochasticity reproducibly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: TextMessage,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
}

impl GenerationRequest {
    pub fn new(prompt: TextMessage, seed: u64, width: usize, height: usize) -> Result<Self, String> {
        if width < MIN_GENERATION_SIDE || height < MIN_GENERATION_SIDE {
            return Err(format!(
                "generation size {width}x{height} below {MIN_GENERATION_SIDE}x{MIN_GENERATION_SIDE}"
            ));
        }
        Ok(Self {
            prompt,
            seed,
            width,
            height,
        })
    }
}

pub trait Captioner: Send + Sync {
    fn identity(&self) -> String;
    fn caption(&self, img: &ImageBuffer) -> Result<TextMessage, BackendError>;
}

pub trait Generator: Send + Sync {
    fn identity(&self) -> String;
    fn generate(&self, req: &GenerationRequest) -> Result<ImageBuffer, BackendError>;
}

pub trait Embedder: Send + Sync {
    fn identity(&self) -> String;
    fn embed(&self, img: &ImageBuffer) -> Result<Embedding, BackendError>;
}

/// The three providers a trial needs.
#[derive(Clone)]
pub struct Providers {
    pub captioner: Arc<dyn Captioner>,
    pub generator: Arc<dyn Generator>,
    pub embedder: Arc<dyn Embedder>,
}

impl Providers {
    pub fn mock() -> Self {
        Self {
            captioner: Arc::new(MockCaptioner),
            generator: Arc::new(MockGenerator),
            embedder: Arc::new(MockEmbedder),
        }
    }

    /// All three roles served by one endpoint, sharing its in-flight limit.
    pub fn http(endpoint: BackendEndpoint) -> Result<Self, String> {
        let backend = Arc::new(HttpBackend::new(endpoint)?);
        Ok(Self {
            captioner: backend.clone(),
            generator: backend.clone(),
            embedder: backend,
        })
    }

    pub fn http_per_role(
        captioner: BackendEndpoint,
        generator: BackendEndpoint,
        embedder: BackendEndpoint,
    ) -> Result<Self, String> {
        Ok(Self {
            captioner: Arc::new(HttpBackend::new(captioner)?),
            generator: Arc::new(HttpBackend::new(generator)?),
            embedder: Arc::new(HttpBackend::new(embedder)?),
        })
    }

    pub fn identities(&self) -> ProviderIdentities {
        ProviderIdentities {
            captioner: self.captioner.identity(),
            generator: self.generator.identity(),
            embedder: self.embedder.identity(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderIdentities {
    pub captioner: String,
    pub generator: String,
    pub embedder: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_validation() {
        let mut ep = BackendEndpoint::new("http://127.0.0.1:9");
        assert!(ep.validate().is_ok());
        ep.timeout = 0.0;
        assert!(ep.validate().is_err());
        ep.timeout = 1.0;
        ep.max_parallel = 0;
        assert!(ep.validate().is_err());
        ep.max_parallel = 1;
        ep.base_url = "ftp://x".into();
        assert!(ep.validate().is_err());
    }

    #[test]
    fn endpoint_defaults_from_json() {
        let ep: BackendEndpoint = serde_json::from_str(r#"{"base_url":"http://h:1"}"#).unwrap();
        assert_eq!(ep, BackendEndpoint::new("http://h:1"));
    }

    #[test]
    fn generation_request_minimum_size() {
        let p = TextMessage::from("a fish");
        assert!(GenerationRequest::new(p.clone(), 0, 16, 16).is_ok());
        assert!(GenerationRequest::new(p, 0, 15, 64).is_err());
    }
}
