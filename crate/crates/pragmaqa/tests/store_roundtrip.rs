mod common;

use pragmaqa::store::{self, StoreError};
use pragmaqa_core::backend::StubEmbedder;
use pragmaqa_core::corpus::Passage;
use pragmaqa_core::retrieval::build_index;
use rand::{Rng, SeedableRng};

fn passage(doc: usize, seq: usize, text: &str) -> Passage {
    Passage {
        id: format!("d{doc}#{seq}"),
        doc_id: format!("d{doc}"),
        seq_index: seq,
        text: text.into(),
        token_count: text.split_whitespace().count(),
    }
}

#[test]
fn three_passages_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.jsonl");
    let ps = vec![
        passage(0, 0, "Babies need sleep."),
        passage(0, 1, "Quotes \"and\" unicode: caf\u{e9} \u{1f476}"),
        passage(1, 0, "Back to sleep"),
    ];
    store::save_store(&ps, &path).unwrap();
    assert_eq!(store::load_store(&path).unwrap(), ps);
}

#[test]
fn malformed_line_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.jsonl");
    let good = serde_json::to_string(&passage(0, 0, "one two")).unwrap();
    std::fs::write(&path, format!("{good}\n\n{{\"id\": \"broken\"\n")).unwrap();
    match store::load_store(&path).unwrap_err() {
        StoreError::CorruptRecord { line, .. } => assert_eq!(line, 3),
        e => panic!("{e:?}"),
    }
    let mut bad = passage(0, 1, "one two");
    bad.token_count = 5;
    std::fs::write(&path, format!("{good}\n{}\n", serde_json::to_string(&bad).unwrap())).unwrap();
    assert!(matches!(store::load_store(&path), Err(StoreError::CorruptRecord { line: 2, .. })));
    std::fs::write(&path, format!("{good}\n{good}\n")).unwrap();
    assert!(matches!(store::load_store(&path), Err(StoreError::CorruptRecord { line: 2, .. })));
}

#[test]
fn ten_thousand_passages_byte_stable() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    let words = ["baby", "fever", "sleep", "feed", "rash", "nap", "milk", "é", "\"q\"", "tab\there"];
    let ps: Vec<Passage> = (0..10_000)
        .map(|i| {
            let n = rng.random_range(1..30);
            let text: Vec<&str> = (0..n).map(|_| words[rng.random_range(0..words.len())]).collect();
            passage(i / 7, i % 7, &text.join(" "))
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    store::save_store(&ps, &a).unwrap();
    let loaded = store::load_store(&a).unwrap();
    assert_eq!(loaded, ps);
    store::save_store(&loaded, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn index_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ps = store::load_store(&common::write_passages(dir.path())).unwrap();
    let index = build_index(&ps, &StubEmbedder::new(32), 8).unwrap();
    let path = dir.path().join("i.jsonl");
    store::save_index(&index, &path).unwrap();
    let back = store::load_index(&path).unwrap();
    assert_eq!(back.ids(), index.ids());
    for i in 0..index.len() {
        assert_eq!(back.vector(i), index.vector(i));
    }
}

#[test]
fn dataset_and_exemplars_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let recs = store::load_dataset(&common::fixture("dataset.jsonl")).unwrap();
    assert_eq!(recs.len(), 5);
    let path = dir.path().join("d.jsonl");
    store::save_dataset(&recs, &path).unwrap();
    assert_eq!(store::load_dataset(&path).unwrap(), recs);
    let ex = store::load_exemplars(&common::fixture("exemplars.jsonl")).unwrap();
    assert_eq!(ex.items.len(), 2);
    let p = dir.path().join("e.jsonl");
    store::save_exemplars(&ex, &p).unwrap();
    assert_eq!(store::load_exemplars(&p).unwrap(), ex);
}

mod dataset_props {
    use pragmaqa::store;
    use pragmaqa_core::dataset::{DatasetRecord, Source};
    use pragmaqa_core::inference::{Evidence, InferenceType, PragmaticInference, Veracity};
    use proptest::prelude::*;

    fn record() -> impl Strategy<Value = DatasetRecord> {
        (
            "[a-z0-9]{1,6}",
            0usize..3,
            "\\PC{1,40}",
            proptest::option::of("\\PC{0,60}"),
            proptest::collection::vec(
                (
                    "\\PC{1,30}",
                    0usize..4,
                    0usize..3,
                    proptest::collection::vec(1u8..=5, 0..3),
                    proptest::option::of(any::<bool>()),
                    proptest::option::of(("[a-z:/.]{1,20}", "\\PC{0,20}")),
                ),
                0..5,
            ),
        )
            .prop_filter("non-blank question", |t| !t.2.trim().is_empty())
            .prop_map(|(qid, s, q, ans, infs)| DatasetRecord {
                question_id: qid.clone(),
                source: Source::ALL[s],
                question_text: q,
                expert_answer: ans,
                inferences: infs
                    .into_iter()
                    .enumerate()
                    .map(|(j, (text, v, t, plaus, addressed, ev))| PragmaticInference {
                        id: format!("{qid}-{j}"),
                        question_id: qid.clone(),
                        text: format!("x{text}"),
                        veracity: [Veracity::True, Veracity::False, Veracity::Subjective, Veracity::Unknown][v],
                        itype: [InferenceType::Presupposition, InferenceType::Implicature, InferenceType::Unlabeled][t],
                        plausibility: plaus,
                        addressed,
                        evidence: ev.map(|(url, passage_text)| Evidence { url, passage_text }),
                    })
                    .collect(),
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn load_inverts_save(recs in proptest::collection::vec(record(), 0..8)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("d.jsonl");
            store::save_dataset(&recs, &path).unwrap();
            prop_assert_eq!(store::load_dataset(&path).unwrap(), recs);
        }
    }
}
