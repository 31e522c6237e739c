//! Question-sourcing heuristics for community forum posts: discourse-marker
//! filtering, medical/non-medical classification and title rewriting.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::backend::{self, BackendError, CompletionRequest, Completer};
use crate::prompts::{medical_classification_prompt, TITLE_REWRITE_PROMPT};

pub const DEFAULT_MIN_COMMENT_SCORE: i64 = 2;

/// Phrases signalling that a commenter corrects the asker's assumption.
pub const ASSUMPTION_CORRECTING_MARKERS: [&str; 18] = [
    "however,",
    "actually,",
    "as a matter of fact",
    "in fact",
    "not true",
    "despite what you",
    "on the contrary",
    "common misconception",
    "not exactly",
    "just to clarify",
    "you're confusing",
    "correct me if i'm wrong",
    "correct me if i am wrong",
    "you're wrong",
    "we have to remember that",
    "while that's true",
    "could be dangerous",
    "might not be the best thing",
];

/// Phrases signalling that a commenter invokes medical expertise.
pub const EXPERTISE_INVOKING_MARKERS: [&str; 8] = [
    "as a doctor",
    "as a medical professional",
    "i'm a doctor",
    "being a doctor",
    "as a nurse",
    "i'm a nurse",
    "i'm a medical professional",
    "being a nurse",
];

pub const WH_WORDS: [&str; 9] = [
    "what", "when", "where", "which", "who", "whom", "whose", "why", "how",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub text: String,
    pub score: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedditPost {
    pub id: String,
    #[serde(default)]
    pub subreddit: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub comments: Vec<Comment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerLexicon {
    pub assumption_correcting: Vec<String>,
    pub expertise_invoking: Vec<String>,
    pub wh_words: Vec<String>,
}

impl Default for MarkerLexicon {
    fn default() -> Self {
        let owned = |xs: &[&str]| xs.iter().map(|s| (*s).to_string()).collect();
        Self {
            assumption_correcting: owned(&ASSUMPTION_CORRECTING_MARKERS),
            expertise_invoking: owned(&EXPERTISE_INVOKING_MARKERS),
            wh_words: owned(&WH_WORDS),
        }
    }
}

fn lower(s: &str) -> String {
    s.chars().flat_map(char::to_lowercase).collect()
}

/// Markers whose lowercase form occurs in the lowercased text, in lexicon
/// order. Whitespace inside a marker must match exactly.
pub fn match_markers<'a, S: AsRef<str>>(text: &str, markers: &'a [S]) -> Vec<&'a str> {
    let text = lower(text);
    markers
        .iter()
        .map(AsRef::as_ref)
        .filter(|m| text.contains(lower(m).as_str()))
        .collect()
}

/// First whitespace token, lowercased, with punctuation stripped.
pub fn leading_word(title: &str) -> Option<String> {
    let first = title.split_whitespace().next()?;
    let word: String = lower(first).chars().filter(|c| !c.is_ascii_punctuation()).collect();
    (!word.is_empty()).then_some(word)
}

/// Which clause kept a post.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MarkerMatch {
    pub assumption_correcting: Vec<String>,
    pub expertise_invoking: Vec<String>,
}

impl MarkerMatch {
    pub fn is_empty(&self) -> bool {
        self.assumption_correcting.is_empty() && self.expertise_invoking.is_empty()
    }
}

/// Markers that qualify a post: assumption-correcting markers count only in
/// comments scoring at least `min_comment_score`; expertise markers count in
/// any comment. Deduplicated, in lexicon order.
pub fn qualifying_markers(post: &RedditPost, lexicon: &MarkerLexicon, min_comment_score: i64) -> MarkerMatch {
    let mut m = MarkerMatch::default();
    for c in &post.comments {
        if c.score >= min_comment_score {
            for hit in match_markers(&c.text, &lexicon.assumption_correcting) {
                if !m.assumption_correcting.iter().any(|x| x == hit) {
                    m.assumption_correcting.push(hit.to_string());
                }
            }
        }
        for hit in match_markers(&c.text, &lexicon.expertise_invoking) {
            if !m.expertise_invoking.iter().any(|x| x == hit) {
                m.expertise_invoking.push(hit.to_string());
            }
        }
    }
    let order = |list: &[String], v: &mut Vec<String>| {
        v.sort_by_key(|x| list.iter().position(|l| l == x));
    };
    order(&lexicon.assumption_correcting, &mut m.assumption_correcting);
    order(&lexicon.expertise_invoking, &mut m.expertise_invoking);
    m
}

pub fn title_starts_with_wh(title: &str, lexicon: &MarkerLexicon) -> bool {
    leading_word(title).is_some_and(|w| lexicon.wh_words.iter().any(|x| lower(x) == w))
}

pub fn keep_post(post: &RedditPost, lexicon: &MarkerLexicon, min_comment_score: i64) -> bool {
    title_starts_with_wh(&post.title, lexicon)
        && !qualifying_markers(post, lexicon, min_comment_score).is_empty()
}

pub fn filter_reddit(posts: &[RedditPost], lexicon: &MarkerLexicon, min_comment_score: i64) -> Vec<RedditPost> {
    posts
        .iter()
        .filter(|p| keep_post(p, lexicon, min_comment_score))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionClass {
    Medical,
    NonMedical,
}

/// "non-medical" takes precedence over "medical"; anything else is
/// non-medical.
pub fn parse_classification(reply: &str) -> QuestionClass {
    let reply = lower(reply);
    if reply.contains("non-medical") {
        QuestionClass::NonMedical
    } else if reply.contains("medical") {
        QuestionClass::Medical
    } else {
        QuestionClass::NonMedical
    }
}

pub fn classify_medical<C: Completer + ?Sized>(question: &str, backend: &C) -> Result<QuestionClass, BackendError> {
    if question.trim().is_empty() {
        return Err(BackendError::InvalidRequest("question is empty".into()));
    }
    let reply = backend::complete(backend, &CompletionRequest::new(medical_classification_prompt(question)))?;
    Ok(parse_classification(&reply))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteExemplar {
    pub title: String,
    pub description: String,
    pub rewrite: String,
}

pub fn default_rewrite_exemplars() -> Vec<RewriteExemplar> {
    alloc::vec![RewriteExemplar {
        title: "How to Stop Co-Sleeping".into(),
        description: "...".into(),
        rewrite: "How to wean my 11-month-old out of Co-Sleeping?".into(),
    }]
}

pub fn build_rewrite_prompt(title: &str, description: &str, exemplars: &[RewriteExemplar]) -> String {
    let mut out = String::from(TITLE_REWRITE_PROMPT);
    out.push_str("\n\n");
    for ex in exemplars {
        let _ = write!(
            out,
            "TITLE: {}\nDESCRIPTION: {}\nREWRITE: {}\n\n",
            ex.title, ex.description, ex.rewrite
        );
    }
    let _ = write!(out, "TITLE: {}\nDESCRIPTION: {}\nREWRITE:", title.trim(), description.trim());
    out
}

/// First non-blank line of the reply with any `REWRITE:` label removed.
fn parse_rewrite(reply: &str) -> Option<String> {
    let line = reply.lines().map(str::trim).find(|l| !l.is_empty())?;
    let line = match line.get(..8) {
        Some(head) if head.eq_ignore_ascii_case("rewrite:") => line[8..].trim(),
        _ => line,
    };
    (!line.is_empty()).then(|| line.to_string())
}

/// Rewrite a post title into a self-contained question. A blank reply
/// returns the original title.
pub fn rewrite_title<C: Completer + ?Sized>(
    title: &str,
    description: &str,
    exemplars: &[RewriteExemplar],
    backend: &C,
) -> Result<String, BackendError> {
    if title.trim().is_empty() {
        return Err(BackendError::InvalidRequest("title is empty".into()));
    }
    let prompt = build_rewrite_prompt(title, description, exemplars);
    let reply = backend.complete(&CompletionRequest::new(prompt))?;
    Ok(parse_rewrite(&reply).unwrap_or_else(|| title.trim().to_string()))
}
