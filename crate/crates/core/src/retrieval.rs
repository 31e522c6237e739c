//! Exact dense retrieval over unit-normalized vectors.
//!
//! Vectors are normalized at insert so cosine similarity is a dot product.
//! Search is brute force: every stored vector is scored.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{self, dot, BackendError, Embedder, EmbeddingVector};
use crate::corpus::Passage;

pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_K_PER_SEED: usize = 100;

/// Maximum deviation from unit norm accepted for stored vectors.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("nothing to index")]
    Empty,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("batch size must be at least 1")]
    InvalidBatchSize,
    #[error("dimension mismatch: index has {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("duplicate passage id {0}")]
    DuplicateId(String),
    #[error("vector for {0} is not unit-normalized")]
    NotNormalized(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub passage_id: String,
    pub score: f64,
}

/// Immutable after construction; search takes `&self` and is safe to call
/// from many threads.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f64>,
}

impl VectorIndex {
    /// Build from raw vectors, normalizing each one.
    pub fn from_vectors(
        entries: impl IntoIterator<Item = (String, EmbeddingVector)>,
    ) -> Result<Self, RetrievalError> {
        Self::assemble(entries, |id, v| {
            let n = v.normalized();
            if (n.norm() - 1.0).abs() > NORM_TOLERANCE {
                return Err(RetrievalError::NotNormalized(id.into()));
            }
            Ok(n)
        })
    }

    /// Build from vectors that are already unit-normalized (for example
    /// when reloading a persisted index). Values are stored bit-for-bit.
    pub fn from_normalized(
        entries: impl IntoIterator<Item = (String, EmbeddingVector)>,
    ) -> Result<Self, RetrievalError> {
        Self::assemble(entries, |id, v| {
            if (v.norm() - 1.0).abs() > NORM_TOLERANCE {
                return Err(RetrievalError::NotNormalized(id.into()));
            }
            Ok(v)
        })
    }

    fn assemble(
        entries: impl IntoIterator<Item = (String, EmbeddingVector)>,
        mut prepare: impl FnMut(&str, EmbeddingVector) -> Result<EmbeddingVector, RetrievalError>,
    ) -> Result<Self, RetrievalError> {
        let mut seen = BTreeSet::new();
        let mut dim = 0;
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (id, v) in entries {
            if ids.is_empty() {
                dim = v.dim();
            } else if v.dim() != dim {
                return Err(RetrievalError::DimensionMismatch {
                    expected: dim,
                    found: v.dim(),
                });
            }
            if !seen.insert(id.clone()) {
                return Err(RetrievalError::DuplicateId(id));
            }
            let v = prepare(&id, v)?;
            data.extend_from_slice(v.values());
            ids.push(id);
        }
        if ids.is_empty() {
            return Err(RetrievalError::Empty);
        }
        Ok(Self { dim, ids, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// `(passage_id, vector)` pairs in insertion order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .zip(self.data.chunks_exact(self.dim))
            .map(|(id, v)| (id.as_str(), v))
    }

    /// Exact top-k by cosine similarity. Ties are broken by passage id
    /// ascending. The query does not need to be normalized.
    pub fn top_k(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<RetrievalHit>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        if query.dim() != self.dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dim,
                found: query.dim(),
            });
        }
        let q = query.normalized();
        let mut scored: Vec<(usize, f64)> = self
            .data
            .chunks_exact(self.dim)
            .map(|v| dot(q.values(), v).clamp(-1.0, 1.0))
            .enumerate()
            .collect();
        let order = |a: &(usize, f64), b: &(usize, f64)| -> Ordering {
            b.1.total_cmp(&a.1).then_with(|| self.ids[a.0].cmp(&self.ids[b.0]))
        };
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        Ok(scored
            .into_iter()
            .map(|(i, score)| RetrievalHit {
                passage_id: self.ids[i].clone(),
                score,
            })
            .collect())
    }
}

/// Embed `passages` in batches of `batch_size` and build an index.
pub fn build_index<E: Embedder + ?Sized>(
    passages: &[Passage],
    embedder: &E,
    batch_size: usize,
) -> Result<VectorIndex, RetrievalError> {
    if passages.is_empty() {
        return Err(RetrievalError::Empty);
    }
    if batch_size == 0 {
        return Err(RetrievalError::InvalidBatchSize);
    }
    let mut entries = Vec::with_capacity(passages.len());
    for batch in passages.chunks(batch_size) {
        let texts: Vec<&str> = batch.iter().map(|p| p.text.as_str()).collect();
        let vectors = backend::embed(embedder, &texts)?;
        entries.extend(batch.iter().map(|p| p.id.clone()).zip(vectors));
    }
    VectorIndex::from_vectors(entries)
}

/// Union over seeds of each seed's `k_per_seed` nearest pool items by cosine
/// similarity. Returns pool indices. Ties prefer the lower pool index.
pub fn nearest_neighbor_select<E: Embedder + ?Sized>(
    seeds: &[&str],
    pool: &[&str],
    k_per_seed: usize,
    embedder: &E,
) -> Result<BTreeSet<usize>, RetrievalError> {
    if seeds.is_empty() || pool.is_empty() {
        return Err(RetrievalError::Empty);
    }
    if k_per_seed == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let seed_vecs = backend::embed(embedder, seeds)?;
    let pool_vecs = backend::embed(embedder, pool)?;
    if seed_vecs[0].dim() != pool_vecs[0].dim() {
        return Err(RetrievalError::DimensionMismatch {
            expected: pool_vecs[0].dim(),
            found: seed_vecs[0].dim(),
        });
    }
    // Pool texts stand in for passage ids; zero-padded indices keep the
    // id tie-break equal to index order.
    let width = decimal_width(pool.len());
    let index = VectorIndex::from_vectors(
        pool_vecs
            .into_iter()
            .enumerate()
            .map(|(i, v)| (alloc::format!("{i:0width$}"), v)),
    )?;
    let lookup: BTreeMap<&str, usize> = index
        .ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut selected = BTreeSet::new();
    for seed in &seed_vecs {
        for hit in index.top_k(seed, k_per_seed)? {
            selected.insert(lookup[hit.passage_id.as_str()]);
        }
    }
    Ok(selected)
}

fn decimal_width(n: usize) -> usize {
    let mut n = n.max(1);
    let mut w = 0;
    while n > 0 {
        n /= 10;
        w += 1;
    }
    w
}
