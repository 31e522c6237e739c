//! Documents and fixed-size passages.
//!
//! A token is a maximal run of non-whitespace characters. Passages are
//! consecutive, non-overlapping windows of `chunk_size` tokens rejoined with
//! single spaces; a shorter final remainder is kept.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_CHUNK_SIZE: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub url: String,
    #[serde(default)]
    pub source_tag: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Passage {
    pub id: String,
    pub doc_id: String,
    pub seq_index: usize,
    pub text: String,
    pub token_count: usize,
}

impl Passage {
    /// Checks the record-level invariants: `token_count` matches the text
    /// and the id is the canonical one for `(doc_id, seq_index)`.
    pub fn check(&self) -> Result<(), CorpusError> {
        let n = tokenize_ws(&self.text).len();
        if n == 0 || n != self.token_count {
            return Err(CorpusError::InvalidPassage(format!(
                "{}: token_count {} but text has {} tokens",
                self.id, self.token_count, n
            )));
        }
        if self.id != passage_id(&self.doc_id, self.seq_index) {
            return Err(CorpusError::InvalidPassage(format!(
                "{}: id does not match doc_id/seq_index",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("document {0} has no tokens")]
    EmptyDocument(String),
    #[error("chunk size must be at least 1")]
    InvalidChunkSize,
    #[error("duplicate passage id {0}")]
    DuplicatePassage(String),
    #[error("invalid passage: {0}")]
    InvalidPassage(String),
}

/// Canonical passage id: `<doc_id>#<seq_index>`.
pub fn passage_id(doc_id: &str, seq_index: usize) -> String {
    format!("{doc_id}#{seq_index}")
}

/// Split on runs of Unicode whitespace. Casing and punctuation are kept.
pub fn tokenize_ws(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

pub fn chunk_document(doc: &Document, chunk_size: usize) -> Result<Vec<Passage>, CorpusError> {
    if chunk_size == 0 {
        return Err(CorpusError::InvalidChunkSize);
    }
    let tokens = tokenize_ws(&doc.text);
    if tokens.is_empty() {
        return Err(CorpusError::EmptyDocument(doc.id.clone()));
    }
    Ok(tokens
        .chunks(chunk_size)
        .enumerate()
        .map(|(seq_index, window)| Passage {
            id: passage_id(&doc.id, seq_index),
            doc_id: doc.id.clone(),
            seq_index,
            text: window.join(" "),
            token_count: window.len(),
        })
        .collect())
}

/// Passages addressable by id, kept in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PassageStore {
    passages: Vec<Passage>,
    by_id: BTreeMap<String, usize>,
}

impl PassageStore {
    pub fn new(passages: Vec<Passage>) -> Result<Self, CorpusError> {
        let mut by_id = BTreeMap::new();
        for (i, p) in passages.iter().enumerate() {
            if by_id.insert(p.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicatePassage(p.id.clone()));
            }
        }
        Ok(Self { passages, by_id })
    }

    pub fn get(&self, id: &str) -> Option<&Passage> {
        self.by_id.get(id).map(|&i| &self.passages[i])
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn into_passages(self) -> Vec<Passage> {
        self.passages
    }
}
