//! Backends, corpus and pipeline wired together from a [`Config`].

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use pragmaqa_core::backend::{BackendError, Completer, Embedder, Reranker, StubCompleter, StubEmbedder, StubReranker};
use pragmaqa_core::corpus::PassageStore;
use pragmaqa_core::inference::{build_generation_prompt, generate_inferences, ExemplarSet, InferenceError};
use pragmaqa_core::prompts::INFERENCE_GENERATION_PROMPT;
use pragmaqa_core::pipeline::{
    AnswerBundle, Backends, Clock, Draft, Engine, FanOut, Mode, PipelineError, Stage,
};
use pragmaqa_core::retrieval::{build_index, VectorIndex, DEFAULT_BATCH_SIZE};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{BackendKind, BackendSpec, Config};
use crate::http::{HttpClient, HttpCompleter, HttpEmbedder, HttpReranker};
use crate::store::{self, StoreError};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("index build failed: {0}")]
    Index(pragmaqa_core::retrieval::RetrievalError),
    #[error("{stage} backend: {source}")]
    Backend { stage: Stage, source: BackendError },
    #[error(transparent)]
    Pipeline(PipelineError),
    #[error("inference generation failed: {0}")]
    Inference(InferenceError),
}

impl From<PipelineError> for RuntimeError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Backend { stage, source } => RuntimeError::Backend { stage, source },
            other => RuntimeError::Pipeline(other),
        }
    }
}

impl From<InferenceError> for RuntimeError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::Backend(source) => RuntimeError::Backend {
                stage: Stage::Inference,
                source,
            },
            other => RuntimeError::Inference(other),
        }
    }
}

impl RuntimeError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            RuntimeError::Backend { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

/// Wall-clock milliseconds since construction.
#[derive(Debug)]
pub struct SystemClock(Instant);

impl Default for SystemClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }
}

/// Runs tasks on up to `jobs` scoped threads; results keep task order.
#[derive(Debug, Clone, Copy)]
pub struct ThreadFanOut {
    pub jobs: usize,
}

impl FanOut for ThreadFanOut {
    fn run<T: Send>(&self, n: usize, task: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
        let workers = self.jobs.min(n);
        if workers <= 1 {
            return (0..n).map(task).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let out = task(i);
                    *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(out);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| {
                m.into_inner()
                    .unwrap_or_else(|e| e.into_inner())
                    .expect("every task ran")
            })
            .collect()
    }
}

fn http_client(spec: &BackendSpec, stage: Stage) -> Result<HttpClient, RuntimeError> {
    HttpClient::new(spec.backend_config()).map_err(|source| RuntimeError::Backend { stage, source })
}

/// Canned list returned by the stub completer for inference-generation
/// prompts.
pub const STUB_INFERENCES: &str =
    "INFERENCES:\n- The asker expects a single correct answer.\n- The asker is looking for practical guidance.";

/// Stub completer that also answers inference-generation prompts.
pub fn stub_completer() -> StubCompleter {
    let marker: String = INFERENCE_GENERATION_PROMPT.chars().take(60).collect();
    StubCompleter::new().with_reply(marker, STUB_INFERENCES)
}

pub fn make_completer(spec: &BackendSpec) -> Result<Box<dyn Completer>, RuntimeError> {
    Ok(match spec.kind {
        BackendKind::Stub => Box::new(stub_completer()),
        BackendKind::Http => Box::new(HttpCompleter(http_client(spec, Stage::Reader)?)),
    })
}

pub fn make_embedder(spec: &BackendSpec) -> Result<Box<dyn Embedder>, RuntimeError> {
    Ok(match spec.kind {
        BackendKind::Stub => Box::new(StubEmbedder::new(spec.dim)),
        BackendKind::Http => Box::new(HttpEmbedder(http_client(spec, Stage::Embed)?)),
    })
}

pub fn make_reranker(spec: &BackendSpec) -> Result<Box<dyn Reranker>, RuntimeError> {
    Ok(match spec.kind {
        BackendKind::Stub => Box::new(StubReranker),
        BackendKind::Http => Box::new(HttpReranker(http_client(spec, Stage::Rerank)?)),
    })
}

/// One question to answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AskRequest {
    pub question: String,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    /// Baseline padding; ignored in augmented mode.
    #[serde(default)]
    pub k: Option<usize>,
    /// Augmented mode: generated when absent.
    #[serde(default)]
    pub inferences: Option<Vec<String>>,
    #[serde(default)]
    pub question_id: Option<String>,
}

fn default_mode() -> Mode {
    Mode::Baseline
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub index_size: usize,
    pub backends: std::collections::BTreeMap<String, bool>,
}

pub struct Runtime {
    pub config: Config,
    pub completer: Box<dyn Completer>,
    pub embedder: Box<dyn Embedder>,
    pub reranker: Box<dyn Reranker>,
    pub index: VectorIndex,
    pub store: PassageStore,
    pub exemplars: ExemplarSet,
    pub jobs: usize,
    clock: SystemClock,
}

impl std::fmt::Debug for Runtime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runtime")
            .field("index_size", &self.index.len())
            .field("jobs", &self.jobs)
            .finish_non_exhaustive()
    }
}

impl Runtime {
    /// Load the passage store and index named in the config, building the
    /// index with the configured embedder when no index file is given.
    pub fn load(config: Config, jobs: usize) -> Result<Self, RuntimeError> {
        let passages_path = config
            .store
            .passages
            .clone()
            .ok_or_else(|| RuntimeError::Usage("store.passages is not configured".into()))?;
        let store = store::load_passage_store(&passages_path)?;
        let embedder = make_embedder(&config.backends.embedder)?;
        let index = match &config.store.index {
            Some(p) => store::load_index(p)?,
            None => build_index(
                store.passages(),
                embedder.as_ref(),
                config.store.batch_size.unwrap_or(DEFAULT_BATCH_SIZE),
            )
            .map_err(|e| match e {
                pragmaqa_core::retrieval::RetrievalError::Backend(source) => RuntimeError::Backend {
                    stage: Stage::Embed,
                    source,
                },
                other => RuntimeError::Index(other),
            })?,
        };
        Self::from_parts(config, embedder, index, store, jobs)
    }

    pub fn from_parts(
        config: Config,
        embedder: Box<dyn Embedder>,
        index: VectorIndex,
        store: PassageStore,
        jobs: usize,
    ) -> Result<Self, RuntimeError> {
        let exemplars = match &config.inference.exemplars {
            Some(p) => store::load_exemplars(p)?,
            None => ExemplarSet::builtin(),
        };
        Ok(Self {
            completer: make_completer(&config.backends.completer)?,
            reranker: make_reranker(&config.backends.reranker)?,
            embedder,
            index,
            store,
            exemplars,
            jobs: jobs.max(1),
            config,
            clock: SystemClock::default(),
        })
    }

    pub fn engine(&self) -> Engine<'_, ThreadFanOut> {
        let backends = Backends {
            completer: self.completer.as_ref(),
            embedder: self.embedder.as_ref(),
            reranker: self.reranker.as_ref(),
        };
        Engine::new(&self.index, &self.store, backends, self.config.pipeline.clone())
            .with_fanout(ThreadFanOut { jobs: self.jobs })
            .with_clock(&self.clock)
    }

    pub fn inference_prompt(&self, question: &str) -> String {
        build_generation_prompt(question, &self.exemplars, self.config.inference.seed)
    }

    pub fn infer(&self, question: &str) -> Result<Vec<String>, RuntimeError> {
        Ok(generate_inferences(
            question,
            &self.exemplars,
            self.config.inference.seed,
            self.completer.as_ref(),
        )?)
    }

    /// Everything except the reader call. Augmented requests without
    /// inferences generate them first.
    pub fn draft(&self, req: &AskRequest) -> Result<Draft, RuntimeError> {
        if req.question.trim().is_empty() {
            return Err(PipelineError::EmptyQuestion.into());
        }
        let engine = self.engine();
        let mut draft = match req.mode {
            Mode::Baseline => engine.draft_baseline(&req.question, req.k.unwrap_or(0))?,
            Mode::Augmented => {
                let (inferences, seed) = match &req.inferences {
                    Some(list) => (list.clone(), None),
                    None => {
                        let t0 = self.clock.now_ms();
                        let list = self.infer(&req.question)?;
                        log::debug!("generated {} inferences in {} ms", list.len(), self.clock.now_ms() - t0);
                        (list, Some(self.config.inference.seed))
                    }
                };
                let mut d = engine.draft_augmented(&req.question, &inferences)?;
                d.bundle.exemplar_seed = seed;
                if seed.is_some() {
                    d.bundle
                        .backend_ids
                        .insert(Stage::Inference.as_str().into(), self.completer.model_id().into());
                }
                d
            }
        };
        draft.bundle.question_id = req.question_id.clone();
        Ok(draft)
    }

    pub fn ask(&self, req: &AskRequest) -> Result<AnswerBundle, RuntimeError> {
        let draft = self.draft(req)?;
        Ok(self.engine().finish(draft)?)
    }

    pub fn health(&self) -> Health {
        let backends = [
            (Stage::Embed, self.embedder.is_reachable()),
            (Stage::Rerank, self.reranker.is_reachable()),
            (Stage::Reader, self.completer.is_reachable()),
        ]
        .into_iter()
        .map(|(s, ok)| (s.as_str().to_string(), ok))
        .collect();
        Health {
            status: "ok".into(),
            index_size: self.index.len(),
            backends,
        }
    }
}
