//! Reading sets recomputed from the stub rules without the engine.

use std::collections::BTreeSet;

use pragmaqa_core::backend::{stub_embed, StubCompleter, StubEmbedder, StubReranker};
use pragmaqa_core::corpus::{Passage, PassageStore};
use pragmaqa_core::pipeline::{Backends, Engine, Mode, PipelineConfig};
use pragmaqa_core::retrieval::build_index;
use proptest::prelude::*;

const DIM: usize = 12;
const VOCAB: [&str; 12] = [
    "baby", "fever", "sleep", "bath", "formula", "milk", "night", "car", "seat", "rash", "cough", "nap",
];

fn passage(i: usize, text: String) -> Passage {
    Passage {
        id: format!("d{i:03}#0"),
        doc_id: format!("d{i:03}"),
        seq_index: 0,
        token_count: text.split_whitespace().count(),
        text,
    }
}

/// Cosine by hand from the raw stub vectors.
fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Lowercase tokens with punctuation trimmed at the edges.
fn tokens(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Query tokens, repeats included, that occur in the candidate.
fn overlap(q: &str, c: &str) -> f64 {
    let ct: BTreeSet<String> = tokens(c).into_iter().collect();
    tokens(q).iter().filter(|t| ct.contains(*t)).count() as f64
}

/// Retrieval + rerank order for `query`, as passage indices.
fn oracle_ranked(passages: &[Passage], query: &str, n_retrieve: usize) -> Vec<usize> {
    let qv = stub_embed(query, DIM);
    let mut scored: Vec<(f64, &str, usize)> = passages
        .iter()
        .enumerate()
        .map(|(i, p)| (cosine(qv.values(), stub_embed(&p.text, DIM).values()), p.id.as_str(), i))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
    scored.truncate(n_retrieve);
    let mut reranked: Vec<(f64, usize, usize)> = scored
        .iter()
        .enumerate()
        .map(|(rank, &(_, _, i))| (overlap(query, &passages[i].text), rank, i))
        .collect();
    reranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    reranked.into_iter().map(|(_, _, i)| i).collect()
}

fn corpus(words: &[Vec<usize>]) -> Vec<Passage> {
    words
        .iter()
        .enumerate()
        .map(|(i, ws)| passage(i, ws.iter().map(|w| VOCAB[*w]).collect::<Vec<_>>().join(" ")))
        .collect()
}

fn run_case(passages: Vec<Passage>, question: &str, inferences: &[String], k: usize, n_retrieve: usize) {
    let embedder = StubEmbedder::new(DIM);
    let index = build_index(&passages, &embedder, 7).unwrap();
    let store = PassageStore::new(passages.clone()).unwrap();
    let completer = StubCompleter::new();
    let backends = Backends {
        completer: &completer,
        embedder: &embedder,
        reranker: &StubReranker,
    };
    let cfg = PipelineConfig {
        n_retrieve,
        ..PipelineConfig::default()
    };
    let engine = Engine::new(&index, &store, backends, cfg);

    let q_ranked = oracle_ranked(&passages, question, n_retrieve);
    let base = engine.run_baseline(question, k).unwrap();
    let expect: Vec<&str> = q_ranked[..5 + k].iter().map(|&i| passages[i].id.as_str()).collect();
    let got: Vec<&str> = base.reading_set.iter().map(|p| p.id.as_str()).collect();
    assert_eq!(got, expect);
    assert_eq!(base.mode, Mode::Baseline);

    let aug = engine.run_augmented(question, inferences).unwrap();
    let mut expect: Vec<usize> = q_ranked[..5].to_vec();
    for inf in inferences {
        let next = oracle_ranked(&passages, inf, n_retrieve)
            .into_iter()
            .find(|i| !expect.contains(i))
            .unwrap();
        expect.push(next);
    }
    let expect: Vec<&str> = expect.iter().map(|&i| passages[i].id.as_str()).collect();
    let got: Vec<&str> = aug.reading_set.iter().map(|p| p.id.as_str()).collect();
    assert_eq!(got, expect);
    assert_eq!(aug.reading_set.len(), 5 + inferences.len());
}

#[test]
fn thirty_passage_corpus() {
    let words: Vec<Vec<usize>> = (0..30).map(|i| vec![i % 12, (i * 5 + 1) % 12, (i * 7 + 3) % 12]).collect();
    run_case(
        corpus(&words),
        "baby fever at night",
        &["Formula milk causes a rash.".into(), "Car seat naps are fine.".into()],
        2,
        100,
    );
}

#[test]
fn duplicate_collision_walks_down() {
    let words: Vec<Vec<usize>> = (0..30).map(|i| vec![i % 12, (i * 5 + 1) % 12]).collect();
    let passages = corpus(&words);
    let q = "baby fever night";
    // The inference reranks exactly like the question, so its top five are
    // all taken and the sixth question-side passage is next.
    let ranked = oracle_ranked(&passages, q, 100);
    run_case(passages.clone(), q, &[q.to_string(), q.to_string()], 0, 100);
    let embedder = StubEmbedder::new(DIM);
    let index = build_index(&passages, &embedder, 64).unwrap();
    let store = PassageStore::new(passages.clone()).unwrap();
    let completer = StubCompleter::new();
    let engine = Engine::new(
        &index,
        &store,
        Backends {
            completer: &completer,
            embedder: &embedder,
            reranker: &StubReranker,
        },
        PipelineConfig::default(),
    );
    let b = engine.run_augmented(q, &[q.into(), q.into()]).unwrap();
    assert_eq!(b.reading_set[5].id, passages[ranked[5]].id);
    assert_eq!(b.reading_set[6].id, passages[ranked[6]].id);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn random_corpora_match_oracle(
        words in prop::collection::vec(prop::collection::vec(0usize..12, 1..6), 12..40),
        q in prop::collection::vec(0usize..12, 1..4),
        infs in prop::collection::vec(prop::collection::vec(0usize..12, 1..4), 0..4),
        k in 0usize..5,
        n_retrieve in 10usize..60,
    ) {
        let passages = corpus(&words);
        let join = |ws: &[usize]| ws.iter().map(|w| VOCAB[*w]).collect::<Vec<_>>().join(" ");
        let inferences: Vec<String> = infs.iter().map(|ws| join(ws)).collect();
        let n = passages.len();
        prop_assume!(5 + k <= n.min(n_retrieve));
        prop_assume!(5 + inferences.len() <= n.min(n_retrieve));
        run_case(passages, &join(&q), &inferences, k, n_retrieve);
    }
}

