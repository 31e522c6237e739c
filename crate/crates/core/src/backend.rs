//! Interfaces to the three external model capabilities (text completion,
//! text embedding, instruction-conditioned rerank scoring) and deterministic
//! in-process stubs for each.
//!
//! The traits carry the raw backend call. The free functions [`complete`],
//! [`embed`] and [`rerank_score`] wrap them with the pre/post-condition
//! checks every caller relies on, so adapters stay thin.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Failures surfaced by any backend call.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("endpoint unreachable after {attempts} attempt(s): {message}")]
    Network { attempts: u32, message: String },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Connection settings for one remote backend.
///
/// Only the *name* of the environment variable holding the credential is
/// stored; the secret itself is resolved by the adapter at call time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub endpoint: String,
    pub model_id: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub credential_env: String,
    #[serde(default = "default_rate_limit")]
    pub rate_limit: usize,
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_max_retries() -> u32 {
    3
}

fn default_rate_limit() -> usize {
    4
}

impl BackendConfig {
    pub fn new(endpoint: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model_id: model_id.into(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            credential_env: String::new(),
            rate_limit: default_rate_limit(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.endpoint.trim().is_empty() {
            return Err(BackendError::InvalidRequest("endpoint is empty".into()));
        }
        if self.timeout_ms == 0 {
            return Err(BackendError::InvalidRequest("timeout_ms must be > 0".into()));
        }
        if self.rate_limit == 0 {
            return Err(BackendError::InvalidRequest("rate_limit must be >= 1".into()));
        }
        Ok(())
    }
}

/// One text-completion call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub stop_sequences: Vec<String>,
}

impl CompletionRequest {
    /// Request with the pipeline defaults: temperature 0, 512 output tokens,
    /// no stop sequences.
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: 0.0,
            max_output_tokens: 512,
            stop_sequences: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.prompt.trim().is_empty() {
            return Err(BackendError::InvalidRequest("prompt is empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_output_tokens must be > 0".into()));
        }
        Ok(())
    }
}

/// A dense embedding. The dimension is the length of `values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, BackendError> {
        if values.is_empty() {
            return Err(BackendError::MalformedResponse("empty embedding".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(BackendError::MalformedResponse("non-finite embedding value".into()));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(dot(&self.values, &self.values))
    }

    /// Cosine similarity; 0 if either vector has zero norm.
    pub fn cosine(&self, other: &Self) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            self.dot(other) / denom
        }
    }

    /// Unit-norm copy. A zero vector is returned unchanged.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        Self {
            values: self.values.iter().map(|v| v / n).collect(),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Text generation.
pub trait Completer: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError>;
    /// Readiness probe; liveness of the caller does not depend on it.
    fn is_reachable(&self) -> bool {
        true
    }
}

/// Text embedding.
pub trait Embedder: Send + Sync {
    fn model_id(&self) -> &str;
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError>;
    fn is_reachable(&self) -> bool {
        true
    }
}

/// Instruction-conditioned relevance scoring (cross-encoder style).
/// Higher scores mean more relevant; one score per candidate, same order.
pub trait Reranker: Send + Sync {
    fn model_id(&self) -> &str;
    fn score(
        &self,
        instruction: &str,
        query: &str,
        candidates: &[&str],
    ) -> Result<Vec<f64>, BackendError>;
    fn is_reachable(&self) -> bool {
        true
    }
}

/// Checked completion: validates the request and strips surrounding
/// whitespace from the generated text.
pub fn complete<C: Completer + ?Sized>(
    backend: &C,
    req: &CompletionRequest,
) -> Result<String, BackendError> {
    req.validate()?;
    Ok(backend.complete(req)?.trim().to_owned())
}

/// Checked embedding: non-empty inputs, one vector per input, shared dim.
pub fn embed<E: Embedder + ?Sized>(
    backend: &E,
    texts: &[&str],
) -> Result<Vec<EmbeddingVector>, BackendError> {
    if texts.is_empty() {
        return Err(BackendError::InvalidRequest("no texts to embed".into()));
    }
    if texts.iter().any(|t| t.is_empty()) {
        return Err(BackendError::InvalidRequest("empty text in embedding batch".into()));
    }
    let out = backend.embed(texts)?;
    if out.len() != texts.len() {
        return Err(BackendError::MalformedResponse(format!(
            "expected {} embeddings, got {}",
            texts.len(),
            out.len()
        )));
    }
    let dim = out[0].dim();
    if let Some(bad) = out.iter().find(|v| v.dim() != dim) {
        return Err(BackendError::DimensionMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    Ok(out)
}

/// Checked rerank scoring: one finite score per candidate.
pub fn rerank_score<R: Reranker + ?Sized>(
    backend: &R,
    instruction: &str,
    query: &str,
    candidates: &[&str],
) -> Result<Vec<f64>, BackendError> {
    if candidates.is_empty() {
        return Err(BackendError::InvalidRequest("no candidates to score".into()));
    }
    if instruction.trim().is_empty() {
        return Err(BackendError::InvalidRequest("rerank instruction is empty".into()));
    }
    let scores = backend.score(instruction, query, candidates)?;
    if scores.len() != candidates.len() {
        return Err(BackendError::MalformedResponse(format!(
            "expected {} scores, got {}",
            candidates.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(BackendError::MalformedResponse("non-finite rerank score".into()));
    }
    Ok(scores)
}

// ---------------------------------------------------------------------------
// Stubs
// ---------------------------------------------------------------------------

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a. Stable across platforms and releases.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

/// Lowercase and collapse every whitespace run into a single space.
pub fn normalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for tok in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(tok.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Deterministic pseudo-random unit vector for `text`.
///
/// Seed: FNV-1a of the normalized text. Components are drawn uniformly
/// from [-1, 1) with ChaCha8 and then scaled to unit norm.
pub fn stub_embed(text: &str, dim: usize) -> EmbeddingVector {
    assert!(dim >= 2, "stub_embed requires dim >= 2");
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(normalize_text(text).as_bytes()));
    let mut values: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = libm::sqrt(dot(&values, &values));
    if norm == 0.0 {
        values[0] = 1.0;
    } else {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    EmbeddingVector { values }
}

/// Lowercased whitespace tokens with leading/trailing non-alphanumerics
/// trimmed; empty results dropped.
pub fn overlap_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric())
                .chars()
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|t| !t.is_empty())
}

/// Number of query tokens (with multiplicity) that occur in the candidate.
pub fn overlap_score(query: &str, candidate: &str) -> f64 {
    let cand: Vec<String> = overlap_tokens(candidate).collect();
    overlap_tokens(query).filter(|q| cand.contains(q)).count() as f64
}

/// Completion stub.
///
/// If the prompt has a line `ECHO:<x>`, returns `<x>`. Otherwise returns the
/// reply of the first canned entry whose marker occurs in the prompt, and
/// failing that a reply derived from a hash of the prompt.
#[derive(Debug, Clone, Default)]
pub struct StubCompleter {
    canned: Vec<(String, String)>,
}

impl StubCompleter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_reply(mut self, marker: impl Into<String>, reply: impl Into<String>) -> Self {
        self.canned.push((marker.into(), reply.into()));
        self
    }
}

impl Completer for StubCompleter {
    fn model_id(&self) -> &str {
        "stub-completer"
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        if let Some(echo) = req
            .prompt
            .lines()
            .find_map(|l| l.trim_start().strip_prefix("ECHO:"))
        {
            return Ok(echo.to_string());
        }
        if let Some((_, reply)) = self.canned.iter().find(|(m, _)| req.prompt.contains(m.as_str())) {
            return Ok(reply.clone());
        }
        Ok(format!(
            "Stub answer {:016x}.",
            stable_hash(req.prompt.as_bytes())
        ))
    }
}

/// Embedding stub backed by [`stub_embed`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StubEmbedder {
    pub dim: usize,
}

impl StubEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 2, "stub embedder requires dim >= 2");
        Self { dim }
    }
}

impl Embedder for StubEmbedder {
    fn model_id(&self) -> &str {
        "stub-embedder"
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError> {
        Ok(texts.iter().map(|t| stub_embed(t, self.dim)).collect())
    }
}

/// Rerank stub: score = [`overlap_score`] of query against candidate.
/// The instruction is ignored.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubReranker;

impl Reranker for StubReranker {
    fn model_id(&self) -> &str {
        "stub-reranker"
    }

    fn score(
        &self,
        _instruction: &str,
        query: &str,
        candidates: &[&str],
    ) -> Result<Vec<f64>, BackendError> {
        Ok(candidates.iter().map(|c| overlap_score(query, c)).collect())
    }
}
