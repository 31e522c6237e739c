//! Prompt and instruction texts, and the functions that fill them.
//!
//! The constants are the fixed instruction texts sent to the models. The
//! builders add the labeled blocks (context, assumptions, exemplars, the
//! target question) around them. Output is byte-stable: golden files under
//! `tests/golden/` pin every builder.

use alloc::format;
use alloc::string::String;
use core::fmt::Write;

/// Rerank instruction for question-side retrieval.
pub const RERANK_QUESTION_INSTRUCTION: &str =
    "Retrieve a passage from medical articles on the web that answers the following question.";

/// Rerank instruction for inference-side retrieval.
pub const RERANK_INFERENCE_INSTRUCTION: &str = "I want to check if the following assumption is true or false. Retrieve an evidence passage for me from medical articles on the web.";

pub const MEDICAL_CLASSIFICATION_PROMPT: &str = "You are an expert in maternal and infant health who specializes in finding out whether a question posed by a new or expecting mother is seeking opinion/community participation, or whether it is a medical question. Given a question, you must answer whether it is question seeking medical advice or if it is seeking personal anecdotes and sharing experience. If it's seeking medical advice, answer with \"medical\". Otherwise, answer \"non-medical\". If a question is under-specified, answer with \"non-medical\".";

pub const TITLE_REWRITE_PROMPT: &str = "You will be shown questions about maternal and infant health asked by users. Each question contains a TITLE and DESCRIPTION that elaborates on it, containing details that are both relevant and irrelevant to answering the question. Given a question TITLE and a DESCRIPTION, your task is to incorporate only the relevant details from the DESCRIPTION and rewrite the TITLE into a REWRITE. If there are no relevant details, return the TITLE. As a general rule, keep the rewrite as similar to the original question as possible. The rewrite should be a question in a single sentence.";

pub const CONSOLIDATION_PROMPT: &str = "Given questions asked by new or expecting mothers, your task is to identify the assumptions in them. For this task, you will be given a QUESTION asked by a new or expecting mother, some ASSUMPTIONS (as a list of beliefs or assumptions) in those questions identified by health experts, and some possible SUBQUESTIONS (as a list) that public health experts have identified to have the same information goals as the original question. Given all three of these, your task is to consolidate the SUBQUESTIONS and ASSUMPTIONS into a single, exhaustive list, called INFERENCES. Turning a SUBQUESTION into an inference may involve just turning it into a declarative sentence, or identifying the assumptions made in the SUBQUESTION. Finally, add the INFERENCES to the list of ASSUMPTIONS and remove any duplicates.";

pub const INFERENCE_GENERATION_PROMPT: &str = "When humans ask questions, they often have certain assumptions or implications that are embedded in the questions. These assumptions and implications may be true or false, and they may or may not be present in the surface form of the question. Given a question asked by a new or expecting mother, your task is to identify all relevant assumptions and implications in these questions and write them in a list titled INFERENCES. Each inference under INFERENCES should be an independent and declarative assertion that represents an assumption or an implication that the speaker makes while asking the question.";

/// Extraction-style reader (passages only, no answer cue).
pub const READER_EXTRACTIVE_TEMPLATE: &str = "You are an expert in maternal and infant health. You are given a few passages below:

Context:
{context}

Using information only from the passages above, respond to the following question with a helpful and complete answer. Use information from multiple passages if necessary to answer the question. Again, you are allowed to only use information from the passages above.

Question: {question}";

/// Chat-style baseline reader.
pub const READER_BASELINE_TEMPLATE: &str = "You are an expert in maternal and infant health. You are given a few verified pieces of information below:


Context:
{context}

Using evidence only from verified pieces of information above, respond to the following question with a helpful and complete answer. Use information from multiple sources above if necessary to answer the question. In your answer, do not reveal that you are fetching information from these pieces of evidence. Use information only from the verified sources above, and not from any other sources.

Question: {question}
Answer:";

/// Chat-style reader that must address the listed assumptions.
pub const READER_AUGMENTED_TEMPLATE: &str = "You are an expert in maternal and infant health. You are given a few verified pieces of information below:

Context:
{context}

Using information only from verified pieces of information above, respond to the following question with a helpful and complete answer. As humans often make assumptions while asking questions, your answer must address assumptions made by the asker listed below.

Assumptions:
{assumptions}

Use information from multiple sources above if necessary to answer the question below and address the ASSUMPTIONS. In your answer, do not reveal that you are fetching information from these pieces of evidence. Use information only from the verified sources above, and not from any other sources.
Question: {question}
Answer:";

/// "Source 1: ...", one paragraph per passage.
pub fn format_context<'a>(passages: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for (i, text) in passages.into_iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        let _ = write!(out, "Source {}: {}", i + 1, text);
    }
    out
}

/// One `- item` line per entry.
pub fn format_bullets<'a>(items: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for (i, item) in items.into_iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str("- ");
        out.push_str(item);
    }
    out
}

/// Single-pass placeholder substitution, so inserted text containing a
/// literal `{question}` is left alone.
pub fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let hit = slots.iter().find_map(|(name, value)| {
            let key = format!("{{{name}}}");
            tail.starts_with(key.as_str()).then_some((key.len(), *value))
        });
        match hit {
            Some((len, value)) => {
                out.push_str(value);
                rest = &tail[len..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn medical_classification_prompt(question: &str) -> String {
    format!("{MEDICAL_CLASSIFICATION_PROMPT}\n\nQuestion: {question}\nAnswer:")
}
