//! Instruction-conditioned reranking of a first-stage retrieval pool.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{self, BackendError, Reranker};
use crate::corpus::Passage;
use crate::prompts::{RERANK_INFERENCE_INSTRUCTION, RERANK_QUESTION_INSTRUCTION};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RerankError {
    #[error("rerank pool is empty")]
    EmptyPool,
    #[error("rerank instruction is empty")]
    EmptyInstruction,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Task instruction handed to the reranker alongside the query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RerankInstruction(String);

impl RerankInstruction {
    /// Instruction for passages that answer the question itself.
    pub fn question() -> Self {
        Self(RERANK_QUESTION_INSTRUCTION.into())
    }

    /// Instruction for evidence that confirms or refutes an assumption.
    pub fn inference() -> Self {
        Self(RERANK_INFERENCE_INSTRUCTION.into())
    }

    /// A configured override.
    pub fn custom(text: impl Into<String>) -> Result<Self, RerankError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(RerankError::EmptyInstruction);
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPassage {
    pub passage: Passage,
    /// Position in the first-stage pool, 0-based.
    pub retrieval_rank: usize,
    pub rerank_score: f64,
}

/// Score every passage of `pool` against `query` and sort by score
/// descending. Equal scores keep first-stage order.
pub fn rerank<R: Reranker + ?Sized>(
    pool: Vec<Passage>,
    query: &str,
    instruction: &RerankInstruction,
    backend: &R,
) -> Result<Vec<RankedPassage>, RerankError> {
    if pool.is_empty() {
        return Err(RerankError::EmptyPool);
    }
    let texts: Vec<&str> = pool.iter().map(|p| p.text.as_str()).collect();
    let scores = backend::rerank_score(backend, instruction.as_str(), query, &texts)?;
    let mut ranked: Vec<RankedPassage> = pool
        .into_iter()
        .zip(scores)
        .enumerate()
        .map(|(retrieval_rank, (passage, rerank_score))| RankedPassage {
            passage,
            retrieval_rank,
            rerank_score,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.rerank_score
            .total_cmp(&a.rerank_score)
            .then(a.retrieval_rank.cmp(&b.retrieval_rank))
    });
    Ok(ranked)
}

/// First `min(n, len)` entries.
pub fn top_n(ranked: &[RankedPassage], n: usize) -> &[RankedPassage] {
    &ranked[..n.min(ranked.len())]
}
