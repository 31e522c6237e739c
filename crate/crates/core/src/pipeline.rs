//! Baseline and inference-augmented QA pipelines.
//!
//! Both pipelines read exactly `n_question_passages + k` passages, where `k`
//! is the number of inferences. The baseline pads the question's reranked
//! list with `k` extra passages; the augmented pipeline adds the best
//! non-duplicate evidence passage for each inference.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{self, BackendError, CompletionRequest, Completer, Embedder, Reranker};
use crate::corpus::{Passage, PassageStore};
use crate::prompts::{
    fill, format_bullets, format_context, READER_AUGMENTED_TEMPLATE, READER_BASELINE_TEMPLATE,
    READER_EXTRACTIVE_TEMPLATE,
};
use crate::rerank::{rerank, RankedPassage, RerankError, RerankInstruction};
use crate::retrieval::{RetrievalError, VectorIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Augmented,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Augmented => "augmented",
        }
    }
}

/// Reader prompt family used for baseline runs. Augmented runs always use
/// the assumption-aware chat prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReaderStyle {
    #[default]
    Chat,
    Extractive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub n_retrieve: usize,
    pub n_question_passages: usize,
    pub reader_style: ReaderStyle,
    /// Cap on whitespace tokens placed in the reader's context block.
    /// `None` disables truncation.
    pub max_context_tokens: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_retrieve: 100,
            n_question_passages: 5,
            reader_style: ReaderStyle::Chat,
            max_context_tokens: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.n_question_passages == 0 || self.n_retrieve < self.n_question_passages {
            return Err(PipelineError::InvalidConfig(
                "need n_retrieve >= n_question_passages >= 1",
            ));
        }
        if self.max_context_tokens == Some(0) {
            return Err(PipelineError::InvalidConfig("max_context_tokens must be >= 1"));
        }
        Ok(())
    }
}

/// Pipeline stage names used in traces and error reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Embed,
    Retrieve,
    Rerank,
    Inference,
    Reader,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Embed => "embed",
            Stage::Retrieve => "retrieve",
            Stage::Rerank => "rerank",
            Stage::Inference => "inference",
            Stage::Reader => "reader",
        }
    }
}

impl core::fmt::Display for Stage {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(&'static str),
    #[error("invalid prompt input: {0}")]
    InvalidPromptInput(&'static str),
    #[error("corpus exhausted: needed {needed} passages, {available} available")]
    CorpusExhausted { needed: usize, available: usize },
    #[error("corpus exhausted: inference {index} has no passage outside the reading set")]
    InferenceExhausted { index: usize },
    #[error("index references passage {0} missing from the store")]
    MissingPassage(String),
    #[error("{stage} backend failed: {source}")]
    Backend { stage: Stage, source: BackendError },
    #[error("retrieval failed: {0}")]
    Retrieval(RetrievalError),
}

impl PipelineError {
    /// Stage to blame when a backend call failed.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Backend { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    fn backend(stage: Stage) -> impl FnOnce(BackendError) -> Self {
        move |source| PipelineError::Backend { stage, source }
    }
}

impl From<RerankError> for PipelineError {
    fn from(e: RerankError) -> Self {
        match e {
            RerankError::Backend(source) => PipelineError::Backend { stage: Stage::Rerank, source },
            RerankError::EmptyPool => PipelineError::CorpusExhausted { needed: 1, available: 0 },
            RerankError::EmptyInstruction => PipelineError::InvalidConfig("empty rerank instruction"),
        }
    }
}

/// Full trace of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerBundle {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    pub question: String,
    pub mode: Mode,
    /// Number of inferences the run accounts for.
    pub k: usize,
    pub inferences_used: Vec<String>,
    pub reading_set: Vec<Passage>,
    /// Parallel to `reading_set`: `question` or `inference:<i>`.
    pub reading_set_origin: Vec<String>,
    pub prompt_text: String,
    pub answer_text: String,
    #[serde(default)]
    pub exemplar_seed: Option<u64>,
    pub backend_ids: BTreeMap<String, String>,
    pub timing_ms: BTreeMap<String, u64>,
}

impl AnswerBundle {
    /// Copy with timing cleared, for comparisons across runs.
    pub fn without_timing(&self) -> Self {
        let mut b = self.clone();
        b.timing_ms.clear();
        b
    }
}

/// Millisecond clock for stage timings. The core has no clock of its own.
pub trait Clock: Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&self) -> u64 {
        0
    }
}

/// Runs independent per-inference tasks. Results come back in task order.
pub trait FanOut: Sync {
    fn run<T: Send>(&self, n: usize, task: &(dyn Fn(usize) -> T + Sync)) -> Vec<T>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl FanOut for Sequential {
    fn run<T: Send>(&self, n: usize, task: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
        (0..n).map(task).collect()
    }
}

/// Backend handles used by one pipeline.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub completer: &'a dyn Completer,
    pub embedder: &'a dyn Embedder,
    pub reranker: &'a dyn Reranker,
}

impl core::fmt::Debug for Backends<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Backends")
            .field("completer", &self.completer.model_id())
            .field("embedder", &self.embedder.model_id())
            .field("reranker", &self.reranker.model_id())
            .finish()
    }
}

/// Build the reader prompt.
///
/// Baseline runs use the chat or extractive template; augmented runs use the
/// assumption-aware template and require at least one assumption.
pub fn build_reader_prompt(
    mode: Mode,
    style: ReaderStyle,
    passages: &[&str],
    question: &str,
    assumptions: &[String],
) -> Result<String, PipelineError> {
    if passages.is_empty() {
        return Err(PipelineError::InvalidPromptInput("no passages"));
    }
    let context = format_context(passages.iter().copied());
    let question = question.trim();
    Ok(match mode {
        Mode::Baseline => {
            let template = match style {
                ReaderStyle::Chat => READER_BASELINE_TEMPLATE,
                ReaderStyle::Extractive => READER_EXTRACTIVE_TEMPLATE,
            };
            fill(template, &[("context", &context), ("question", question)])
        }
        Mode::Augmented => {
            if assumptions.is_empty() {
                return Err(PipelineError::InvalidPromptInput("augmented prompt needs assumptions"));
            }
            let bullets = format_bullets(assumptions.iter().map(String::as_str));
            fill(
                READER_AUGMENTED_TEMPLATE,
                &[("context", &context), ("assumptions", &bullets), ("question", question)],
            )
        }
    })
}

/// Keep at most `limit` whitespace tokens across passages, in order.
fn truncate_context<'a>(passages: &'a [Passage], limit: Option<usize>) -> Vec<alloc::borrow::Cow<'a, str>> {
    use alloc::borrow::Cow;
    let Some(mut left) = limit else {
        return passages.iter().map(|p| Cow::Borrowed(p.text.as_str())).collect();
    };
    let mut out = Vec::new();
    for p in passages {
        if left == 0 {
            break;
        }
        if p.token_count <= left {
            out.push(Cow::Borrowed(p.text.as_str()));
            left -= p.token_count;
        } else {
            let head: Vec<&str> = p.text.split_whitespace().take(left).collect();
            out.push(Cow::Owned(head.join(" ")));
            left = 0;
        }
    }
    out
}

/// Everything up to (but not including) the reader call.
#[derive(Debug, Clone, PartialEq)]
pub struct Draft {
    pub bundle: AnswerBundle,
}

/// A pipeline over an immutable index and passage store.
pub struct Engine<'a, F: FanOut = Sequential> {
    pub index: &'a VectorIndex,
    pub store: &'a PassageStore,
    pub backends: Backends<'a>,
    pub config: PipelineConfig,
    pub fanout: F,
    pub clock: &'a dyn Clock,
}

impl<F: FanOut> core::fmt::Debug for Engine<'_, F> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Engine")
            .field("index_size", &self.index.len())
            .field("store_size", &self.store.len())
            .field("backends", &self.backends)
            .field("config", &self.config)
            .finish()
    }
}

impl<'a> Engine<'a, Sequential> {
    pub fn new(index: &'a VectorIndex, store: &'a PassageStore, backends: Backends<'a>, config: PipelineConfig) -> Self {
        Self {
            index,
            store,
            backends,
            config,
            fanout: Sequential,
            clock: &NoClock,
        }
    }
}

impl<'a, F: FanOut> Engine<'a, F> {
    pub fn with_fanout<G: FanOut>(self, fanout: G) -> Engine<'a, G> {
        Engine {
            index: self.index,
            store: self.store,
            backends: self.backends,
            config: self.config,
            fanout,
            clock: self.clock,
        }
    }

    pub fn with_clock(mut self, clock: &'a dyn Clock) -> Self {
        self.clock = clock;
        self
    }

    /// Dense retrieval of `n_retrieve` passages followed by reranking.
    pub fn retrieve_and_rerank(
        &self,
        query: &str,
        instruction: &RerankInstruction,
    ) -> Result<Vec<RankedPassage>, PipelineError> {
        let qv = backend::embed(self.backends.embedder, &[query])
            .map_err(PipelineError::backend(Stage::Embed))?
            .remove(0);
        let hits = self.index.top_k(&qv, self.config.n_retrieve).map_err(|e| match e {
            RetrievalError::Backend(source) => PipelineError::Backend { stage: Stage::Embed, source },
            other => PipelineError::Retrieval(other),
        })?;
        let pool = hits
            .iter()
            .map(|h| {
                self.store
                    .get(&h.passage_id)
                    .cloned()
                    .ok_or_else(|| PipelineError::MissingPassage(h.passage_id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(rerank(pool, query, instruction, self.backends.reranker)?)
    }

    fn base_bundle(&self, question: &str, mode: Mode) -> AnswerBundle {
        let mut backend_ids = BTreeMap::new();
        backend_ids.insert(Stage::Embed.as_str().to_string(), self.backends.embedder.model_id().to_string());
        backend_ids.insert(Stage::Rerank.as_str().to_string(), self.backends.reranker.model_id().to_string());
        backend_ids.insert(Stage::Reader.as_str().to_string(), self.backends.completer.model_id().to_string());
        AnswerBundle {
            question_id: None,
            question: question.trim().to_string(),
            mode,
            k: 0,
            inferences_used: Vec::new(),
            reading_set: Vec::new(),
            reading_set_origin: Vec::new(),
            prompt_text: String::new(),
            answer_text: String::new(),
            exemplar_seed: None,
            backend_ids,
            timing_ms: BTreeMap::new(),
        }
    }

    fn check_question(&self, question: &str) -> Result<(), PipelineError> {
        self.config.validate()?;
        if question.trim().is_empty() {
            return Err(PipelineError::EmptyQuestion);
        }
        Ok(())
    }

    /// Baseline run up to the built prompt.
    pub fn draft_baseline(&self, question: &str, k: usize) -> Result<Draft, PipelineError> {
        self.check_question(question)?;
        let mut bundle = self.base_bundle(question, Mode::Baseline);
        let t0 = self.clock.now_ms();
        let ranked = self.retrieve_and_rerank(&bundle.question, &RerankInstruction::question())?;
        let needed = self.config.n_question_passages + k;
        if ranked.len() < needed {
            return Err(PipelineError::CorpusExhausted {
                needed,
                available: ranked.len(),
            });
        }
        bundle.timing_ms.insert("question_retrieval".into(), self.clock.now_ms() - t0);
        bundle.k = k;
        bundle.reading_set = ranked.into_iter().take(needed).map(|r| r.passage).collect();
        bundle.reading_set_origin = alloc::vec![String::from("question"); needed];
        self.attach_prompt(&mut bundle)?;
        Ok(Draft { bundle })
    }

    /// Augmented run up to the built prompt. With no inferences this is the
    /// baseline with `k = 0`, tagged augmented.
    pub fn draft_augmented(&self, question: &str, inferences: &[String]) -> Result<Draft, PipelineError> {
        self.check_question(question)?;
        let inferences: Vec<String> = inferences
            .iter()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if inferences.is_empty() {
            let mut draft = self.draft_baseline(question, 0)?;
            draft.bundle.mode = Mode::Augmented;
            return Ok(draft);
        }
        let mut bundle = self.base_bundle(question, Mode::Augmented);
        let t0 = self.clock.now_ms();
        let ranked = self.retrieve_and_rerank(&bundle.question, &RerankInstruction::question())?;
        let n = self.config.n_question_passages;
        if ranked.len() < n {
            return Err(PipelineError::CorpusExhausted {
                needed: n,
                available: ranked.len(),
            });
        }
        let t1 = self.clock.now_ms();
        bundle.timing_ms.insert("question_retrieval".into(), t1 - t0);

        let instruction = RerankInstruction::inference();
        let per_inference = self.fanout.run(inferences.len(), &|i| {
            self.retrieve_and_rerank(&inferences[i], &instruction)
        });
        bundle.timing_ms.insert("inference_retrieval".into(), self.clock.now_ms() - t1);

        let mut reading_set: Vec<Passage> = ranked.into_iter().take(n).map(|r| r.passage).collect();
        let mut origin = alloc::vec![String::from("question"); n];
        let mut taken: BTreeSet<String> = reading_set.iter().map(|p| p.id.clone()).collect();
        for (index, result) in per_inference.into_iter().enumerate() {
            let candidate = result?
                .into_iter()
                .find(|r| !taken.contains(&r.passage.id))
                .ok_or(PipelineError::InferenceExhausted { index })?;
            taken.insert(candidate.passage.id.clone());
            reading_set.push(candidate.passage);
            origin.push(format!("inference:{index}"));
        }
        bundle.k = inferences.len();
        bundle.inferences_used = inferences;
        bundle.reading_set = reading_set;
        bundle.reading_set_origin = origin;
        self.attach_prompt(&mut bundle)?;
        Ok(Draft { bundle })
    }

    fn attach_prompt(&self, bundle: &mut AnswerBundle) -> Result<(), PipelineError> {
        let texts = truncate_context(&bundle.reading_set, self.config.max_context_tokens);
        let texts: Vec<&str> = texts.iter().map(|c| c.as_ref()).collect();
        let mode = if bundle.inferences_used.is_empty() {
            Mode::Baseline
        } else {
            Mode::Augmented
        };
        bundle.prompt_text = build_reader_prompt(
            mode,
            self.config.reader_style,
            &texts,
            &bundle.question,
            &bundle.inferences_used,
        )?;
        Ok(())
    }

    /// Call the reader on a drafted prompt.
    pub fn finish(&self, draft: Draft) -> Result<AnswerBundle, PipelineError> {
        let mut bundle = draft.bundle;
        let t0 = self.clock.now_ms();
        bundle.answer_text = backend::complete(self.backends.completer, &CompletionRequest::new(bundle.prompt_text.clone()))
            .map_err(PipelineError::backend(Stage::Reader))?;
        bundle.timing_ms.insert("reader".into(), self.clock.now_ms() - t0);
        Ok(bundle)
    }

    pub fn run_baseline(&self, question: &str, k: usize) -> Result<AnswerBundle, PipelineError> {
        self.finish(self.draft_baseline(question, k)?)
    }

    pub fn run_augmented(&self, question: &str, inferences: &[String]) -> Result<AnswerBundle, PipelineError> {
        self.finish(self.draft_augmented(question, inferences)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{StubCompleter, StubEmbedder, StubReranker};
    use crate::retrieval::build_index;
    use alloc::vec;

    const TOPICS: [&str; 6] = ["fever", "sleep", "bath", "formula", "vaccine", "car seat"];

    fn corpus(n: usize) -> (VectorIndex, PassageStore) {
        let passages: Vec<Passage> = (0..n)
            .map(|i| {
                let text = format!("baby {} advice passage {i} {}", TOPICS[i % 6], TOPICS[(i / 6) % 6]);
                Passage {
                    id: format!("doc{:02}#0", i),
                    doc_id: format!("doc{:02}", i),
                    seq_index: 0,
                    token_count: text.split_whitespace().count(),
                    text,
                }
            })
            .collect();
        let index = build_index(&passages, &StubEmbedder::new(16), 64).unwrap();
        (index, PassageStore::new(passages).unwrap())
    }

    fn backends<'a>(c: &'a StubCompleter, e: &'a StubEmbedder, r: &'a StubReranker) -> Backends<'a> {
        Backends { completer: c, embedder: e, reranker: r }
    }

    #[test]
    fn baseline_sizes() {
        let (index, store) = corpus(30);
        let (c, e, r) = (StubCompleter::new(), StubEmbedder::new(16), StubReranker);
        let engine = Engine::new(&index, &store, backends(&c, &e, &r), PipelineConfig::default());
        let b2 = engine.run_baseline("baby fever at night?", 2).unwrap();
        assert_eq!(b2.reading_set.len(), 7);
        assert_eq!(b2.k, 2);
        assert!(b2.inferences_used.is_empty());
        let b0 = engine.run_baseline("baby fever at night?", 0).unwrap();
        assert_eq!(b0.reading_set[..], b2.reading_set[..5]);
        assert!(b0.prompt_text.contains("do not reveal that you are fetching information"));
        assert!(!b0.answer_text.is_empty());
    }

    #[test]
    fn augmented_sizes_and_fallback() {
        let (index, store) = corpus(30);
        let (c, e, r) = (StubCompleter::new(), StubEmbedder::new(16), StubReranker);
        let engine = Engine::new(&index, &store, backends(&c, &e, &r), PipelineConfig::default());
        let infs = vec!["Babies need a bath daily.".to_string(), "Formula causes fever.".to_string()];
        let a = engine.run_augmented("baby fever at night?", &infs).unwrap();
        assert_eq!(a.reading_set.len(), 7);
        assert_eq!(a.k, 2);
        let ids: BTreeSet<_> = a.reading_set.iter().map(|p| &p.id).collect();
        assert_eq!(ids.len(), 7);
        assert!(a.prompt_text.contains("- Babies need a bath daily.\n- Formula causes fever."));
        assert_eq!(a.reading_set_origin[6], "inference:1");

        let fallback = engine.run_augmented("baby fever at night?", &[]).unwrap();
        let mut base = engine.run_baseline("baby fever at night?", 0).unwrap();
        assert_eq!(fallback.mode, Mode::Augmented);
        base.mode = Mode::Augmented;
        assert_eq!(fallback, base);
    }

    #[test]
    fn exhaustion() {
        let (index, store) = corpus(6);
        let (c, e, r) = (StubCompleter::new(), StubEmbedder::new(16), StubReranker);
        let engine = Engine::new(&index, &store, backends(&c, &e, &r), PipelineConfig::default());
        assert_eq!(
            engine.run_baseline("q fever", 2),
            Err(PipelineError::CorpusExhausted { needed: 7, available: 6 })
        );
        let (index, store) = corpus(5);
        let cfg = PipelineConfig { n_retrieve: 5, ..PipelineConfig::default() };
        let engine = Engine::new(&index, &store, backends(&c, &e, &r), cfg);
        // every passage is already in the question's reading set
        assert_eq!(
            engine.run_augmented("q fever", &["x".into()]),
            Err(PipelineError::InferenceExhausted { index: 0 })
        );
        assert_eq!(engine.run_baseline("   ", 0), Err(PipelineError::EmptyQuestion));
    }

    #[test]
    fn reader_prompt_contracts() {
        let p = build_reader_prompt(Mode::Augmented, ReaderStyle::Chat, &["P1"], "Q?", &["A1".into()]).unwrap();
        assert!(p.contains("your answer must address assumptions made by the asker listed below."));
        let b = build_reader_prompt(Mode::Baseline, ReaderStyle::Chat, &["one", "two", "three"], "Q?", &[]).unwrap();
        assert!(b.contains("do not reveal that you are fetching information"));
        let positions: Vec<usize> = ["Source 1: one", "Source 2: two", "Source 3: three"]
            .iter()
            .map(|s| {
                assert_eq!(b.matches(s).count(), 1);
                b.find(s).unwrap()
            })
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        let x = build_reader_prompt(Mode::Baseline, ReaderStyle::Extractive, &["one"], "Q?", &[]).unwrap();
        assert!(x.contains("allowed to only use information from the passages"));
        assert!(build_reader_prompt(Mode::Augmented, ReaderStyle::Chat, &["p"], "Q?", &[]).is_err());
        assert!(build_reader_prompt(Mode::Baseline, ReaderStyle::Chat, &[], "Q?", &[]).is_err());
    }

    #[test]
    fn context_truncation_knob() {
        let (index, store) = corpus(30);
        let (c, e, r) = (StubCompleter::new(), StubEmbedder::new(16), StubReranker);
        let cfg = PipelineConfig { max_context_tokens: Some(8), ..PipelineConfig::default() };
        let engine = Engine::new(&index, &store, backends(&c, &e, &r), cfg);
        let d = engine.draft_baseline("baby fever", 1).unwrap().bundle;
        assert_eq!(d.reading_set.len(), 6);
        assert!(d.prompt_text.contains("Source 2: "));
        assert!(!d.prompt_text.contains("Source 3: "));
    }

    struct FailingReader;
    impl Completer for FailingReader {
        fn model_id(&self) -> &str {
            "down"
        }
        fn complete(&self, _: &CompletionRequest) -> Result<String, BackendError> {
            Err(BackendError::Network { attempts: 1, message: "refused".into() })
        }
    }

    #[test]
    fn backend_failures_name_stage() {
        let (index, store) = corpus(10);
        let (e, r) = (StubEmbedder::new(16), StubReranker);
        let b = Backends { completer: &FailingReader, embedder: &e, reranker: &r };
        let engine = Engine::new(&index, &store, b, PipelineConfig::default());
        assert_eq!(engine.run_baseline("fever", 0).unwrap_err().stage(), Some(Stage::Reader));
        let wrong_dim = StubEmbedder::new(8);
        let b = Backends { completer: &FailingReader, embedder: &wrong_dim, reranker: &r };
        let engine = Engine::new(&index, &store, b, PipelineConfig::default());
        assert!(matches!(
            engine.run_baseline("fever", 0),
            Err(PipelineError::Retrieval(RetrievalError::DimensionMismatch { .. }))
        ));
    }
}
