//! Question/inference dataset records and their summary statistics.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{InferenceType, PragmaticInference, Veracity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Rosie,
    Reddit,
    Nq,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::Rosie, Source::Reddit, Source::Nq];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Rosie => "rosie",
            Source::Reddit => "reddit",
            Source::Nq => "nq",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub question_id: String,
    pub source: Source,
    pub question_text: String,
    #[serde(default)]
    pub expert_answer: Option<String>,
    #[serde(default)]
    pub inferences: Vec<PragmaticInference>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("record {record}: invalid {field}")]
pub struct SchemaError {
    pub record: String,
    pub field: String,
}

impl DatasetRecord {
    pub fn validate(&self) -> Result<(), SchemaError> {
        let err = |field: &str| SchemaError {
            record: self.question_id.clone(),
            field: field.into(),
        };
        if self.question_id.is_empty() {
            return Err(err("question_id"));
        }
        if self.question_text.trim().is_empty() {
            return Err(err("question_text"));
        }
        for inf in &self.inferences {
            if inf.question_id != self.question_id {
                return Err(err("inferences.question_id"));
            }
            if inf.text.trim().is_empty() {
                return Err(err("inferences.text"));
            }
            if inf.plausibility.iter().any(|r| !(1..=5).contains(r)) {
                return Err(err("inferences.plausibility"));
            }
        }
        Ok(())
    }
}

/// Sentences are maximal segments ending in a run of `.`, `!` or `?`
/// followed by whitespace or end of text; a non-blank tail without a
/// terminator counts as one more. Abbreviations such as "e.g." therefore
/// end a sentence.
pub fn count_sentences(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    let mut count = 0;
    let mut pending = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i;
            while j < chars.len() && matches!(chars[j], '.' | '!' | '?') {
                j += 1;
            }
            if j == chars.len() || chars[j].is_whitespace() {
                count += 1;
                pending = false;
            } else {
                pending = true;
            }
            i = j;
            continue;
        }
        if !c.is_whitespace() {
            pending = true;
        }
        i += 1;
    }
    count + usize::from(pending)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceStats {
    pub n_questions: usize,
    /// Mean sentence count over questions that have an expert answer.
    pub mean_answer_sentences: f64,
    pub n_inferences: usize,
    /// Share of inferences with known veracity that are false or subjective.
    pub pct_false_subjective: f64,
    pub pct_true: f64,
    /// Inferences with unknown veracity, excluded from the percentages.
    pub n_unknown: usize,
}

pub fn stats(records: &[DatasetRecord]) -> BTreeMap<Source, SourceStats> {
    #[derive(Default)]
    struct Acc {
        questions: usize,
        answered: usize,
        sentences: usize,
        inferences: usize,
        true_: usize,
        false_subj: usize,
        unknown: usize,
    }
    let mut acc: BTreeMap<Source, Acc> = BTreeMap::new();
    for r in records {
        let a = acc.entry(r.source).or_default();
        a.questions += 1;
        if let Some(ans) = &r.expert_answer {
            a.answered += 1;
            a.sentences += count_sentences(ans);
        }
        for inf in &r.inferences {
            a.inferences += 1;
            match inf.veracity {
                Veracity::True => a.true_ += 1,
                Veracity::False | Veracity::Subjective => a.false_subj += 1,
                Veracity::Unknown => a.unknown += 1,
            }
        }
    }
    acc.into_iter()
        .map(|(source, a)| {
            let known = (a.true_ + a.false_subj) as f64;
            let pct = |x: usize| if known == 0.0 { 0.0 } else { 100.0 * x as f64 / known };
            let stats = SourceStats {
                n_questions: a.questions,
                mean_answer_sentences: if a.answered == 0 {
                    0.0
                } else {
                    a.sentences as f64 / a.answered as f64
                },
                n_inferences: a.inferences,
                pct_false_subjective: pct(a.false_subj),
                pct_true: pct(a.true_),
                n_unknown: a.unknown,
            };
            (source, stats)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CrosstabKey {
    pub veracity: Veracity,
    pub itype: InferenceType,
}

/// Counts over veracity × type × addressed, restricted to inferences with a
/// type label and an addressed judgement.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Crosstab {
    /// `(addressed, not_addressed)` per (veracity, type).
    pub counts: BTreeMap<CrosstabKey, (usize, usize)>,
}

impl Crosstab {
    pub fn total(&self) -> usize {
        self.counts.values().map(|(a, n)| a + n).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Share addressed / not addressed within each (veracity, type) row.
    pub fn row_shares(&self) -> BTreeMap<CrosstabKey, (f64, f64)> {
        self.counts
            .iter()
            .map(|(k, (a, n))| {
                let t = (a + n) as f64;
                (*k, (*a as f64 / t, *n as f64 / t))
            })
            .collect()
    }

    pub fn marginal_by_veracity(&self) -> BTreeMap<Veracity, usize> {
        let mut m = BTreeMap::new();
        for (k, (a, n)) in &self.counts {
            *m.entry(k.veracity).or_default() += a + n;
        }
        m
    }

    pub fn marginal_by_type(&self) -> BTreeMap<InferenceType, usize> {
        let mut m = BTreeMap::new();
        for (k, (a, n)) in &self.counts {
            *m.entry(k.itype).or_default() += a + n;
        }
        m
    }

    pub fn marginal_by_addressed(&self) -> (usize, usize) {
        self.counts
            .values()
            .fold((0, 0), |(x, y), (a, n)| (x + a, y + n))
    }
}

pub fn crosstab(records: &[DatasetRecord]) -> Crosstab {
    let mut t = Crosstab::default();
    for inf in records.iter().flat_map(|r| &r.inferences) {
        let Some(addressed) = inf.addressed else { continue };
        if inf.itype == InferenceType::Unlabeled {
            continue;
        }
        let cell = t
            .counts
            .entry(CrosstabKey {
                veracity: inf.veracity,
                itype: inf.itype,
            })
            .or_default();
        if addressed {
            cell.0 += 1;
        } else {
            cell.1 += 1;
        }
    }
    t
}
