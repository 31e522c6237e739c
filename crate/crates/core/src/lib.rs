//! Core of a retrieval-augmented QA engine that is aware of the pragmatic
//! inferences (assumptions and implications) embedded in user questions.
//!
//! Everything here is pure computation over `alloc` types: chunking, exact
//! dense retrieval, instruction-conditioned reranking, prompt construction,
//! inference parsing, question-sourcing filters, evaluation metrics and
//! dataset statistics. External models are reached through the traits in
//! [`backend`]; deterministic in-process stubs live next to them so the
//! whole pipeline runs offline.
//!
//! IO, HTTP backends, the service and the CLI live in the `pragmaqa` crate.
#![cfg_attr(not(test), no_std)]
#![deny(unused_must_use, rust_2018_idioms)]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod backend;
pub mod corpus;
pub mod dataset;
pub mod evalkit;
pub mod inference;
pub mod pipeline;
pub mod prompts;
pub mod rerank;
pub mod retrieval;
pub mod sourcing;

pub use backend::{
    BackendConfig, BackendError, CompletionRequest, Completer, Embedder, EmbeddingVector,
    Reranker,
};
pub use corpus::{chunk_document, tokenize_ws, Document, Passage};
pub use pipeline::{AnswerBundle, Mode, PipelineConfig};
pub use retrieval::{RetrievalHit, VectorIndex};
