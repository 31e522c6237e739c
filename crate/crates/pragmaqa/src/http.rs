//! HTTP+JSON backend adapters.
//!
//! Every call goes through [`HttpClient::post_json`], which bounds in-flight
//! requests by `rate_limit`, retries transient failures (transport errors,
//! 429 and 5xx) with jittered exponential backoff, and logs request and
//! response bodies at debug level with the credential replaced by `***`.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use log::debug;
use pragmaqa_core::backend::{
    BackendConfig, BackendError, CompletionRequest, Completer, Embedder, EmbeddingVector, Reranker,
};
use pragmaqa_core::evalkit::{ExternalScorer, ScorerError};
use rand::Rng;
use serde_json::{json, Value};

pub const REDACTED: &str = "***";
pub const DEFAULT_BACKOFF: Duration = Duration::from_millis(500);

/// Counting semaphore for in-flight requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Replace every occurrence of `secret` in `text`.
pub fn redact(text: &str, secret: Option<&str>) -> String {
    match secret {
        Some(s) if !s.is_empty() => text.replace(s, REDACTED),
        _ => text.to_string(),
    }
}

/// Delay before retry number `attempt` (1-based): `base * 2^(attempt-1)`
/// scaled by a uniform factor in [0.8, 1.2].
pub fn backoff_delay(base: Duration, attempt: u32, rng: &mut impl Rng) -> Duration {
    let factor = 2f64.powi(attempt.saturating_sub(1).min(16) as i32);
    base.mul_f64(factor * rng.random_range(0.8..=1.2))
}

enum Failure {
    Transient(String),
    Throttled,
    Fatal(BackendError),
}

#[derive(Debug)]
pub struct HttpClient {
    config: BackendConfig,
    agent: ureq::Agent,
    gate: Gate,
    backoff: Duration,
}

impl HttpClient {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            gate: Gate::new(config.rate_limit),
            config,
            agent,
            backoff: DEFAULT_BACKOFF,
        })
    }

    /// Override the initial backoff delay (tests use a few milliseconds).
    pub fn with_backoff(mut self, base: Duration) -> Self {
        self.backoff = base;
        self
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn credential(&self) -> Option<String> {
        if self.config.credential_env.is_empty() {
            return None;
        }
        std::env::var(&self.config.credential_env).ok().filter(|s| !s.is_empty())
    }

    fn attempt(&self, body: &Value, secret: Option<&str>) -> Result<Value, Failure> {
        let mut req = self
            .agent
            .post(&self.config.endpoint)
            .header("Content-Type", "application/json");
        if let Some(s) = secret {
            req = req.header("Authorization", &format!("Bearer {s}"));
        }
        let mut resp = match req.send(body.to_string()) {
            Ok(r) => r,
            Err(ureq::Error::BadUri(u)) => {
                return Err(Failure::Fatal(BackendError::InvalidRequest(format!("bad endpoint {u}"))))
            }
            Err(e) => return Err(Failure::Transient(redact(&e.to_string(), secret))),
        };
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Transient(e.to_string()))?;
        debug!(
            "{} <- {} {}",
            self.config.model_id,
            status,
            redact(&text, secret)
        );
        match status {
            200..=299 => serde_json::from_str(&text)
                .map_err(|e| Failure::Fatal(BackendError::MalformedResponse(format!("invalid JSON: {e}")))),
            429 => Err(Failure::Throttled),
            500..=599 => Err(Failure::Transient(format!("HTTP {status}"))),
            _ => Err(Failure::Fatal(BackendError::InvalidRequest(format!(
                "HTTP {status}: {}",
                redact(text.trim(), secret)
            )))),
        }
    }

    /// POST `body` and parse a JSON reply, retrying up to `max_retries`
    /// times on transient failures.
    pub fn post_json(&self, body: &Value) -> Result<Value, BackendError> {
        let secret = self.credential();
        let _permit = self.gate.acquire();
        debug!(
            "{} -> POST {} Authorization: {} {}",
            self.config.model_id,
            self.config.endpoint,
            if secret.is_some() { REDACTED } else { "-" },
            redact(&body.to_string(), secret.as_deref())
        );
        let mut rng = rand::rng();
        let max_attempts = self.config.max_retries + 1;
        let mut last = Failure::Transient(String::new());
        for attempt in 1..=max_attempts {
            match self.attempt(body, secret.as_deref()) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(f) => last = f,
            }
            if attempt < max_attempts {
                std::thread::sleep(backoff_delay(self.backoff, attempt, &mut rng));
            }
        }
        Err(match last {
            Failure::Throttled => BackendError::RateLimited { attempts: max_attempts },
            Failure::Transient(message) => BackendError::Network {
                attempts: max_attempts,
                message,
            },
            Failure::Fatal(e) => e,
        })
    }

    /// One short GET; any HTTP status counts as reachable.
    pub fn probe(&self) -> bool {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(self.config.timeout_ms.min(2_000))))
            .http_status_as_error(false)
            .build()
            .into();
        agent.get(&self.config.endpoint).call().is_ok()
    }
}

fn malformed(what: &str) -> BackendError {
    BackendError::MalformedResponse(format!("missing {what}"))
}

/// Text from `choices[0].text`, `choices[0].message.content` or `text`.
pub fn extract_completion(v: &Value) -> Result<String, BackendError> {
    let choice = v.get("choices").and_then(|c| c.get(0));
    choice
        .and_then(|c| c.get("text"))
        .or_else(|| choice.and_then(|c| c.pointer("/message/content")))
        .or_else(|| v.get("text"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| malformed("completion text"))
}

fn as_vector(v: &Value) -> Result<Vec<f64>, BackendError> {
    v.as_array()
        .ok_or_else(|| malformed("embedding array"))?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| malformed("numeric embedding value")))
        .collect()
}

/// Vectors from `data[i].embedding` (ordered by `index` when present) or
/// `embeddings[i]`.
pub fn extract_embeddings(v: &Value) -> Result<Vec<Vec<f64>>, BackendError> {
    if let Some(data) = v.get("data").and_then(Value::as_array) {
        let mut rows: Vec<(u64, Vec<f64>)> = data
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let idx = d.get("index").and_then(Value::as_u64).unwrap_or(i as u64);
                Ok((idx, as_vector(d.get("embedding").ok_or_else(|| malformed("data[].embedding"))?)?))
            })
            .collect::<Result<_, BackendError>>()?;
        rows.sort_by_key(|(i, _)| *i);
        return Ok(rows.into_iter().map(|(_, r)| r).collect());
    }
    v.get("embeddings")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("embeddings"))?
        .iter()
        .map(as_vector)
        .collect()
}

/// Scores from `scores[i]` or `results[].{index, relevance_score}`.
pub fn extract_scores(v: &Value, n: usize) -> Result<Vec<f64>, BackendError> {
    if let Some(s) = v.get("scores").and_then(Value::as_array) {
        return s
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| malformed("numeric score")))
            .collect();
    }
    let results = v
        .get("results")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("scores"))?;
    let mut out = vec![None; n];
    for r in results {
        let idx = r.get("index").and_then(Value::as_u64).ok_or_else(|| malformed("results[].index"))? as usize;
        let score = r
            .get("relevance_score")
            .or_else(|| r.get("score"))
            .and_then(Value::as_f64)
            .ok_or_else(|| malformed("results[].relevance_score"))?;
        *out.get_mut(idx).ok_or_else(|| malformed("in-range result index"))? = Some(score);
    }
    out.into_iter().map(|s| s.ok_or_else(|| malformed("score for every candidate"))).collect()
}

#[derive(Debug)]
pub struct HttpCompleter(pub HttpClient);

impl Completer for HttpCompleter {
    fn model_id(&self) -> &str {
        &self.0.config.model_id
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        let body = json!({
            "model": self.0.config.model_id,
            "prompt": req.prompt,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
            "stop": req.stop_sequences,
        });
        extract_completion(&self.0.post_json(&body)?)
    }

    fn is_reachable(&self) -> bool {
        self.0.probe()
    }
}

#[derive(Debug)]
pub struct HttpEmbedder(pub HttpClient);

impl Embedder for HttpEmbedder {
    fn model_id(&self) -> &str {
        &self.0.config.model_id
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError> {
        let body = json!({ "model": self.0.config.model_id, "input": texts });
        let rows = extract_embeddings(&self.0.post_json(&body)?)?;
        if let Some(first) = rows.first() {
            if let Some(bad) = rows.iter().find(|r| r.len() != first.len()) {
                return Err(BackendError::DimensionMismatch {
                    expected: first.len(),
                    found: bad.len(),
                });
            }
        }
        rows.into_iter().map(EmbeddingVector::new).collect()
    }

    fn is_reachable(&self) -> bool {
        self.0.probe()
    }
}

#[derive(Debug)]
pub struct HttpReranker(pub HttpClient);

impl Reranker for HttpReranker {
    fn model_id(&self) -> &str {
        &self.0.config.model_id
    }

    fn score(&self, instruction: &str, query: &str, candidates: &[&str]) -> Result<Vec<f64>, BackendError> {
        let body = json!({
            "model": self.0.config.model_id,
            "instruction": instruction,
            "query": query,
            "documents": candidates,
        });
        extract_scores(&self.0.post_json(&body)?, candidates.len())
    }

    fn is_reachable(&self) -> bool {
        self.0.probe()
    }
}

/// Remote answer scorer: posts `{candidate, reference, question}` and reads
/// `score`.
#[derive(Debug)]
pub struct HttpScorer {
    name: String,
    client: HttpClient,
}

impl HttpScorer {
    pub fn new(name: impl Into<String>, client: HttpClient) -> Self {
        Self {
            name: name.into(),
            client,
        }
    }
}

impl ExternalScorer for HttpScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, candidate: &str, reference: &str, question: Option<&str>) -> Result<f64, ScorerError> {
        let err = |message: String| ScorerError {
            scorer: self.name.clone(),
            message,
        };
        let body = json!({ "candidate": candidate, "reference": reference, "question": question });
        let v = self.client.post_json(&body).map_err(|e| err(e.to_string()))?;
        v.get("score")
            .and_then(Value::as_f64)
            .filter(|s| s.is_finite())
            .ok_or_else(|| err("missing score".into()))
    }
}
