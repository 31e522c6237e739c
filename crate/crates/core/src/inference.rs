//! Pragmatic inferences: the assumptions and implications a question
//! carries. Generation and consolidation go through a completion backend;
//! coverage matching goes through an embedder.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{self, normalize_text, BackendError, CompletionRequest, Completer, Embedder};
use crate::prompts::{CONSOLIDATION_PROMPT, INFERENCE_GENERATION_PROMPT};

pub const DEFAULT_COVERAGE_TAU: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("no INFERENCES list found in model output")]
    ParseError,
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error("invalid inference {id}: {field}")]
    InvalidField { id: String, field: &'static str },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Veracity {
    True,
    False,
    Subjective,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InferenceType {
    Presupposition,
    Implicature,
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evidence {
    pub url: String,
    pub passage_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PragmaticInference {
    pub id: String,
    pub question_id: String,
    pub text: String,
    pub veracity: Veracity,
    pub itype: InferenceType,
    /// Likert ratings, each 1..=5.
    #[serde(default)]
    pub plausibility: Vec<u8>,
    #[serde(default)]
    pub addressed: Option<bool>,
    #[serde(default)]
    pub evidence: Option<Evidence>,
}

impl PragmaticInference {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.text.trim().is_empty() {
            return Err(InferenceError::InvalidField {
                id: self.id.clone(),
                field: "text",
            });
        }
        if self.plausibility.iter().any(|r| !(1..=5).contains(r)) {
            return Err(InferenceError::InvalidField {
                id: self.id.clone(),
                field: "plausibility",
            });
        }
        Ok(())
    }
}

/// One in-context example: a question and its inferences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub question: String,
    pub inferences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExemplarSet {
    pub items: Vec<Exemplar>,
}

/// Built-in exemplars: seven questions spanning the three question sources
/// with 37 inferences in total. The first inference of each item is an
/// expert-annotated one; the rest were written for this set. Replace them
/// with an exemplar file for real experiments.
const DEFAULT_EXEMPLARS: &[(&str, &[&str])] = &[
    (
        "Is it okay for my to color my hair after giving birth?",
        &[
            "Hair dye chemicals can pass through breast milk from mother to child.",
            "The asker has recently given birth.",
            "The asker may be breastfeeding.",
            "Coloring hair after giving birth may carry risks for the mother or baby.",
            "There is a recommended waiting period before coloring hair after giving birth.",
            "Hair dye chemicals can be absorbed through the scalp.",
        ],
    ),
    (
        "What cough medicine is appropriate for breastfeeding mothers?",
        &[
            "Some cough medicines can be secreted in breast milk.",
            "The asker is breastfeeding.",
            "The asker has a cough.",
            "Some cough medicines are unsafe to take while breastfeeding.",
            "Cough medicine is necessary to treat a cough while breastfeeding.",
        ],
    ),
    (
        "What is the advantage for not having an epidural during the labor?",
        &[
            "Avoiding an epidural contributes to a more \"natural\" and unmedicated birthing experience.",
            "There are advantages to not having an epidural during labor.",
            "Epidurals carry risks for the mother or the baby.",
            "The asker is considering giving birth without an epidural.",
            "Labor without an epidural is safe for most mothers.",
        ],
    ),
    (
        "Is it safe to lay on my stomach at 28 weeks of pregnancy?",
        &[
            "Sleeping on the stomach while pregnant may have potential risks.",
            "The asker is 28 weeks pregnant.",
            "Lying on the stomach could harm the baby.",
            "Sleeping positions during pregnancy affect the baby's health.",
            "Lying on the stomach becomes uncomfortable later in pregnancy.",
            "There is a point in pregnancy after which stomach sleeping is not recommended.",
        ],
    ),
    (
        "Is it bad to use different bottles/nipples during feedings?",
        &[
            "Using different bottles or nipples for feeding may compromise the baby's latch.",
            "The asker is bottle feeding their baby.",
            "Babies can develop a preference for one type of bottle or nipple.",
            "Switching bottles may cause nipple confusion.",
            "Different bottles or nipples may affect how much the baby eats.",
        ],
    ),
    (
        "When does the fetus begin to develop memory?",
        &[
            "Fetuses have the ability to form memories.",
            "Memory development begins before birth.",
            "There is a specific point in pregnancy when memory begins to develop.",
            "A fetus can remember sounds or voices heard in the womb.",
            "Fetal memory can be measured.",
        ],
    ),
    (
        "What causes a rupture in the amniotic sac?",
        &[
            "There may be ways to prevent early amniotic sac rupture.",
            "The amniotic sac can rupture before labor.",
            "Amniotic sac rupture has identifiable causes.",
            "A ruptured amniotic sac can be dangerous for the baby.",
            "Rupture of the amniotic sac is a normal part of labor.",
        ],
    ),
];

impl ExemplarSet {
    pub fn builtin() -> Self {
        Self {
            items: DEFAULT_EXEMPLARS
                .iter()
                .map(|(q, infs)| Exemplar {
                    question: (*q).to_string(),
                    inferences: infs.iter().map(|s| (*s).to_string()).collect(),
                })
                .collect(),
        }
    }

    pub fn total_inferences(&self) -> usize {
        self.items.iter().map(|e| e.inferences.len()).sum()
    }

    /// Copy with the item order shuffled by a ChaCha8 stream seeded with
    /// `seed`. Inference order within an item is kept.
    pub fn shuffled(&self, seed: u64) -> Self {
        let mut items = self.items.clone();
        items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Self { items }
    }
}

fn bullets(out: &mut String, items: &[String]) {
    if items.is_empty() {
        out.push_str("(none)\n");
    }
    for item in items {
        let _ = writeln!(out, "- {item}");
    }
}

/// Instruction, then one `Question:`/`INFERENCES:` block per exemplar (in
/// the order shuffled by `seed`), then the target question with an open
/// `INFERENCES:` heading.
pub fn build_generation_prompt(question: &str, exemplars: &ExemplarSet, seed: u64) -> String {
    let mut out = String::from(INFERENCE_GENERATION_PROMPT);
    out.push_str("\n\n");
    for ex in exemplars.shuffled(seed).items {
        let _ = writeln!(out, "Question: {}", ex.question);
        out.push_str("INFERENCES:\n");
        bullets(&mut out, &ex.inferences);
        out.push('\n');
    }
    let _ = write!(out, "Question: {}\nINFERENCES:", question.trim());
    out
}

pub fn generate_inferences<C: Completer + ?Sized>(
    question: &str,
    exemplars: &ExemplarSet,
    seed: u64,
    backend: &C,
) -> Result<Vec<String>, InferenceError> {
    if question.trim().is_empty() {
        return Err(InferenceError::InvalidInput("question is empty"));
    }
    let prompt = build_generation_prompt(question, exemplars, seed);
    let raw = backend::complete(backend, &CompletionRequest::new(prompt))?;
    parse_inference_list(&raw)
}

pub fn build_consolidation_prompt(question: &str, assumptions: &[String], subquestions: &[String]) -> String {
    let mut out = String::from(CONSOLIDATION_PROMPT);
    let _ = write!(out, "\n\nQUESTION: {}\nASSUMPTIONS:\n", question.trim());
    bullets(&mut out, assumptions);
    out.push_str("SUBQUESTIONS:\n");
    bullets(&mut out, subquestions);
    out.push_str("INFERENCES:");
    out
}

/// Merge expert assumptions and subquestions into one deduplicated list.
pub fn consolidate<C: Completer + ?Sized>(
    question: &str,
    assumptions: &[String],
    subquestions: &[String],
    backend: &C,
) -> Result<Vec<String>, InferenceError> {
    if assumptions.is_empty() && subquestions.is_empty() {
        return Err(InferenceError::InvalidInput(
            "need at least one assumption or subquestion",
        ));
    }
    let prompt = build_consolidation_prompt(question, assumptions, subquestions);
    let raw = backend::complete(backend, &CompletionRequest::new(prompt))?;
    parse_inference_list(&raw)
}

fn is_heading(line: &str) -> bool {
    line.trim()
        .trim_matches(|c: char| c == '#' || c == '*' || c == ':' || c.is_whitespace())
        .eq_ignore_ascii_case("inferences")
}

fn list_item(line: &str) -> Option<&str> {
    let line = line.trim_start();
    if let Some(rest) = line.strip_prefix('-').or_else(|| line.strip_prefix('*')) {
        return Some(rest.trim());
    }
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        if let Some(rest) = line[digits..].strip_prefix('.') {
            return Some(rest.trim());
        }
    }
    None
}

/// Parse a bulleted list out of model output.
///
/// Items are read after the last `INFERENCES` heading (any case, optional
/// colon), or from the whole text when no heading is present. Lines that
/// start with `-`, `*` or `N.` are items; other lines are skipped. Items
/// are trimmed, empty ones dropped, and duplicates removed ignoring case
/// and whitespace runs (first occurrence wins).
pub fn parse_inference_list(raw: &str) -> Result<Vec<String>, InferenceError> {
    let lines: Vec<&str> = raw.lines().collect();
    let start = lines.iter().rposition(|l| is_heading(l)).map_or(0, |i| i + 1);
    let mut seen = BTreeSet::new();
    let items: Vec<String> = lines[start..]
        .iter()
        .filter_map(|l| list_item(l))
        .filter(|item| !item.is_empty())
        .filter(|item| seen.insert(normalize_text(item)))
        .map(ToString::to_string)
        .collect();
    if items.is_empty() {
        return Err(InferenceError::ParseError);
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub covered: Vec<bool>,
    pub coverage: f64,
}

/// A human inference counts as covered when its best cosine similarity to
/// any generated inference reaches `tau`.
pub fn match_coverage<E: Embedder + ?Sized>(
    human: &[&str],
    generated: &[&str],
    embedder: &E,
    tau: f64,
) -> Result<Coverage, InferenceError> {
    if human.is_empty() {
        return Err(InferenceError::InvalidInput("no human inferences"));
    }
    if generated.is_empty() {
        return Ok(Coverage {
            covered: alloc::vec![false; human.len()],
            coverage: 0.0,
        });
    }
    let h = backend::embed(embedder, human)?;
    let g = backend::embed(embedder, generated)?;
    let covered: Vec<bool> = h
        .iter()
        .map(|hv| {
            g.iter()
                .map(|gv| hv.cosine(gv))
                .fold(f64::NEG_INFINITY, f64::max)
                >= tau
        })
        .collect();
    let coverage = covered.iter().filter(|c| **c).count() as f64 / human.len() as f64;
    Ok(Coverage { covered, coverage })
}
