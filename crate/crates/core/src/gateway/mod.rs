//! Text-generation and embedding backends, prompt rendering and response
//! parsing.
//!
//! Backends implement [`TextGenBackend`] and/or [`EmbedBackend`]. The
//! [`Gateway`] bundles one of each behind a bounded worker pool so that batch
//! calls never exceed the configured number of in-flight requests, and returns
//! results in input order.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use thiserror::Error;

mod hash;
mod live;
pub mod parse;
pub mod prompt;
mod scripted;

pub use hash::HashBackend;
pub use live::{LiveBackend, LiveConfig, DEFAULT_API_KEY_ENV};
pub use parse::{parse_profile, parse_step1, parse_step2, parse_utility, Step2Parse, UtilityParse};
pub use prompt::{render_prompt, Example, PromptFamily, PromptInput, PromptSet, PromptTemplate};
pub use scripted::{
    prompt_sha256, read_cassette, write_cassette, CassetteEntry, FnBackend, RecordingBackend,
    ScriptedBackend,
};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("rate limited (retry after {retry_after_ms:?} ms)")]
    RateLimited { retry_after_ms: Option<u64> },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("no recorded response for prompt {sha256}")]
    NoRecording { sha256: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("slot mismatch: {0}")]
    SlotMismatch(String),
    #[error("fixture {path}: {msg}")]
    Fixture { path: PathBuf, msg: String },
    #[error("empty model output")]
    EmptyOutput,
    #[error("unparseable response: {0}")]
    UnparseableResponse(String),
    #[error("inconsistent response: {0}")]
    InconsistentResponse(String),
    #[error("unknown utility label {0:?}")]
    UnknownLabel(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, params: GenParams) -> Self {
        GenerationRequest {
            prompt: prompt.into(),
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty prompt".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Decoding parameters for one kind of call.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GenParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl GenParams {
    /// Extraction and utility calls.
    pub const DETERMINISTIC: GenParams = GenParams {
        temperature: 0.0,
        max_tokens: 1024,
    };
    /// Profile generation samples at temperature 1.
    pub const PROFILE: GenParams = GenParams {
        temperature: 1.0,
        max_tokens: 1024,
    };
}

/// Unit-length embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Normalizes `values` to unit length. Fails on an empty or zero vector.
    pub fn normalized(values: Vec<f64>) -> Result<Self, GatewayError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if values.is_empty() || norm.is_nan() || norm <= 0.0 || !norm.is_finite() {
            return Err(GatewayError::MalformedResponse(
                "zero or non-finite embedding".into(),
            ));
        }
        Ok(EmbeddingVector {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity. Both vectors are unit length, so this is the dot
    /// product. Mismatched dimensions compare as 0.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        if self.values.len() != other.values.len() {
            return 0.0;
        }
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }
}

pub trait TextGenBackend: Send + Sync {
    fn id(&self) -> String;
    fn generate(&self, req: &GenerationRequest) -> Result<String, GatewayError>;
}

pub trait EmbedBackend: Send + Sync {
    fn id(&self) -> String;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError>;
}

/// Validates the request and returns the raw completion.
pub fn generate(
    backend: &dyn TextGenBackend,
    req: &GenerationRequest,
) -> Result<String, GatewayError> {
    req.validate()?;
    backend.generate(req)
}

/// Embeds non-empty text and guarantees a unit-length result.
pub fn embed(backend: &dyn EmbedBackend, text: &str) -> Result<EmbeddingVector, GatewayError> {
    if text.trim().is_empty() {
        return Err(GatewayError::EmptyText);
    }
    let v = backend.embed(text)?;
    EmbeddingVector::normalized(v.values)
}

/// A text backend and an embedder behind a bounded worker pool.
pub struct Gateway {
    text: Arc<dyn TextGenBackend>,
    embedder: Arc<dyn EmbedBackend>,
    pool: rayon::ThreadPool,
    max_inflight: usize,
    cache: Mutex<HashMap<String, EmbeddingVector>>,
}

impl Gateway {
    pub fn new(
        text: Arc<dyn TextGenBackend>,
        embedder: Arc<dyn EmbedBackend>,
        max_inflight: usize,
    ) -> Result<Self, GatewayError> {
        if max_inflight == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_inflight must be positive".into(),
            ));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(max_inflight)
            .thread_name(|i| format!("gateway-{i}"))
            .build()
            .map_err(|e| GatewayError::BackendUnavailable(e.to_string()))?;
        Ok(Gateway {
            text,
            embedder,
            pool,
            max_inflight,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// Seeded-hash backend for both generation and embeddings.
    pub fn hash(seed: u64, max_inflight: usize) -> Self {
        let b = Arc::new(HashBackend::new(seed));
        Gateway::new(b.clone(), b, max_inflight).expect("positive max_inflight")
    }

    pub fn max_inflight(&self) -> usize {
        self.max_inflight
    }

    pub fn text_backend_id(&self) -> String {
        self.text.id()
    }

    pub fn embed_backend_id(&self) -> String {
        self.embedder.id()
    }

    pub fn generate(&self, req: &GenerationRequest) -> Result<String, GatewayError> {
        generate(self.text.as_ref(), req)
    }

    /// Embeds text, memoizing by exact string.
    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(text) {
            return Ok(v.clone());
        }
        let v = embed(self.embedder.as_ref(), text)?;
        self.cache
            .lock()
            .expect("cache lock")
            .insert(text.to_string(), v.clone());
        Ok(v)
    }

    /// Runs `f` over `items` on the gateway's pool. At most `max_inflight` calls
    /// run at once; results keep input order.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        self.pool.install(|| items.par_iter().map(&f).collect())
    }

    pub fn generate_many(&self, reqs: &[GenerationRequest]) -> Vec<Result<String, GatewayError>> {
        self.map(reqs, |r| self.generate(r))
    }

    pub fn embed_many(&self, texts: &[String]) -> Vec<Result<EmbeddingVector, GatewayError>> {
        self.map(texts, |t| self.embed(t))
    }
}
