//! Text-generation backends.
//!
//! Every pipeline stage talks to a [`GenerationBackend`]. Production runs use
//! [`http::ChatCompletionsBackend`]; tests and desk-scale runs use the
//! scripted implementations in [`scripted`]. [`cache::CachedBackend`] wraps
//! any of them with a write-once, content-addressed reply cache.

pub mod cache;
pub mod http;
pub mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::CachedBackend;
pub use http::{ChatCompletionsBackend, HttpBackendConfig, WireApi};
pub use scripted::{HeuristicBackend, RequestCounter, ScriptedBackend};

/// Whether a backend is a raw next-token model or an instruction-tuned one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    BaseCompletion,
    Instruct,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::BaseCompletion => "base-completion",
            Role::Instruct => "instruct",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default)]
    pub stop: Vec<String>,
    pub seed: u64,
    /// Number of top alternatives to capture per generated token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_logprobs: Option<u32>,
}

impl SamplingParams {
    pub fn new(temperature: f64, max_tokens: u32) -> Self {
        Self {
            temperature,
            max_tokens,
            stop: Vec::new(),
            seed: 0,
            top_logprobs: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub params: SamplingParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopLogprob {
    pub token: String,
    pub logprob: f64,
}

/// The sampled token at one response position plus its top alternatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprobs {
    pub token: String,
    pub logprob: f64,
    pub top: Vec<TopLogprob>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<Vec<TokenLogprobs>>,
}

impl Generation {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            logprobs: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed endpoint response: {0}")]
    Malformed(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("cache i/o: {0}")]
    Cache(#[from] std::io::Error),
    #[error("scripted backend refused the request: {0}")]
    Scripted(String),
}

impl BackendError {
    /// Whether retrying the same request could succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait GenerationBackend: Send + Sync {
    fn role(&self) -> Role;

    fn generate(&self, request: &GenerationRequest) -> Result<Generation, BackendError>;

    /// Short label used in cache keys and diagnostics.
    fn name(&self) -> String {
        self.role().as_str().to_string()
    }
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for std::sync::Arc<B> {
    fn role(&self) -> Role {
        (**self).role()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Generation, BackendError> {
        (**self).generate(request)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for Box<B> {
    fn role(&self) -> Role {
        (**self).role()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Generation, BackendError> {
        (**self).generate(request)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

/// Derives a child seed from a parent seed and a path of labels.
///
/// Used to give every request in a run its own reproducible seed.
pub fn derive_seed(parent: u64, labels: &[u64]) -> u64 {
    // splitmix64 over the sequence
    let mut x = parent ^ 0x9E37_79B9_7F4A_7C15;
    for &l in labels {
        x = x.wrapping_add(l).wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x = z ^ (z >> 31);
    }
    x
}
