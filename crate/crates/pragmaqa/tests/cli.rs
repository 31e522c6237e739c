mod common;

use std::path::Path;

use common::{fixture, write_passages};
use pragmaqa::cli::{run, Io};
use serde_json::Value;

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str], stdin: &str) -> Out {
    let mut input = stdin.as_bytes();
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let code = run(
        std::iter::once("pragmaqa").chain(args.iter().copied()),
        Io {
            stdin: &mut input,
            stdout: &mut o,
            stderr: &mut e,
        },
    );
    Out {
        code,
        stdout: String::from_utf8(o).unwrap(),
        stderr: String::from_utf8(e).unwrap(),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn store_flag(dir: &Path) -> String {
    format!("store.passages={}", write_passages(dir).display())
}

#[test]
fn ingest_and_index() {
    let dir = tempfile::tempdir().unwrap();
    let passages = dir.path().join("p.jsonl");
    let out = cli(
        &["ingest", "--docs", p(&fixture("documents.jsonl")), "--out", p(&passages), "--chunk-size", "20"],
        "",
    );
    assert_eq!(out.code, 0, "{}", out.stderr);
    let v: Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(v["documents"], 10);
    assert_eq!(v["passages"], 30);
    let index = dir.path().join("i.jsonl");
    let out = cli(&["index", "--passages", p(&passages), "--out", p(&index), "--set", "backends.embedder.dim=16"], "");
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(serde_json::from_str::<Value>(&out.stdout).unwrap()["dim"], 16);

    // A prebuilt index is used as-is.
    let set_p = format!("store.passages={}", passages.display());
    let set_i = format!("store.index={}", index.display());
    let out = cli(
        &["ask", "--set", &set_p, "--set", &set_i, "--set", "backends.embedder.dim=16", "--question", "fever", "--mode", "baseline"],
        "",
    );
    assert_eq!(out.code, 0, "{}", out.stderr);
}

#[test]
fn ask_baseline_json() {
    let dir = tempfile::tempdir().unwrap();
    let set = store_flag(dir.path());
    let out = cli(
        &["ask", "--set", &set, "--question", "Can my baby drink water?", "--mode", "baseline", "--k", "2", "--question-id", "q7"],
        "",
    );
    assert_eq!(out.code, 0, "{}", out.stderr);
    let b: Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(b["reading_set"].as_array().unwrap().len(), 7);
    assert_eq!(b["question_id"], "q7");
    assert_eq!(b["k"], 2);
}

#[test]
fn ask_reads_stdin_and_dry_runs() {
    let dir = tempfile::tempdir().unwrap();
    let set = store_flag(dir.path());
    let out = cli(
        &["ask", "--set", &set, "--question", "-", "--mode", "augmented", "--inference", "Water is always safe.", "--dry-run"],
        "Can my baby drink water?\n",
    );
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.contains("Can my baby drink water?"));
    assert!(out.stdout.contains("- Water is always safe."));
    assert!(!out.stdout.contains("Stub answer"));

    let out = cli(&["infer", "--question", "Why does my baby spit up?", "--dry-run"], "");
    assert_eq!(out.code, 0);
    assert!(out.stdout.contains("Why does my baby spit up?"));
    let out = cli(&["infer", "--question", "Why does my baby spit up?"], "");
    assert_eq!(out.code, 0, "{}", out.stderr);
    let v: Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(v["inferences"].as_array().unwrap().len(), 2);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(cli(&["ask", "--mode", "baseline"], "").code, 1);
    assert_eq!(cli(&["frobnicate"], "").code, 1);
    assert_eq!(cli(&["--help"], "").code, 0);
    assert_eq!(cli(&["stats", "--dataset", "x", "--set", "pipeline.colour=3"], "").code, 1);
    assert_eq!(cli(&["stats", "--dataset", "x", "--set", "pipeline.n_retrieve=0"], "").code, 1);
    let dir = tempfile::tempdir().unwrap();
    let set = store_flag(dir.path());
    let out = cli(&["ask", "--set", &set, "--question", " ", "--mode", "baseline"], "");
    assert_eq!(out.code, 1);
    let out = cli(&["ask", "--set", &set, "--question", "q", "--mode", "augmented", "--dry-run"], "");
    assert_eq!(out.code, 1);
    let out = cli(&["ask", "--set", &set, "--question", "q", "--mode", "augmented", "--k", "2"], "");
    assert_eq!(out.code, 1);
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[pipeline]\nn_retreive = 50\n").unwrap();
    let out = cli(&["--config", p(&cfg), "stats", "--dataset", "x"], "");
    assert_eq!(out.code, 1);
    assert!(out.stderr.contains("n_retreive"), "{}", out.stderr);
}

#[test]
fn backend_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let set = store_flag(dir.path());
    let ep = format!("backends.completer.endpoint={}", common::dead_endpoint());
    let out = cli(
        &[
            "ask", "--set", &set, "--set", "backends.completer.kind=\"http\"", "--set", &ep,
            "--set", "backends.completer.max_retries=0", "--question", "q", "--mode", "baseline",
        ],
        "",
    );
    assert_eq!(out.code, 3, "{}", out.stderr);
}

#[test]
fn eval_reports_and_checks_ids() {
    let dir = tempfile::tempdir().unwrap();
    let set = store_flag(dir.path());
    let mut bundles = String::new();
    for (id, q) in [("a", "Can my baby drink water?"), ("b", "When do babies sleep through the night?")] {
        let out = cli(&["ask", "--set", &set, "--question", q, "--mode", "baseline", "--question-id", id], "");
        assert_eq!(out.code, 0, "{}", out.stderr);
        bundles.push_str(&out.stdout);
    }
    let bpath = dir.path().join("bundles.jsonl");
    std::fs::write(&bpath, &bundles).unwrap();
    let first: Value = serde_json::from_str(bundles.lines().next().unwrap()).unwrap();
    let refs = dir.path().join("refs.jsonl");
    std::fs::write(
        &refs,
        format!(
            "{}\n{}\n",
            serde_json::json!({"question_id": "a", "answer": first["answer_text"]}),
            serde_json::json!({"question_id": "b", "answer": "Most babies sleep longer stretches by six months."})
        ),
    )
    .unwrap();
    let named = format!("base={}", bpath.display());
    let out = cli(&["eval", "--bundles", &named, "--references", p(&refs), "--format", "json"], "");
    assert_eq!(out.code, 0, "{}", out.stderr);
    let recs: Vec<Value> = out.stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs.len(), 2);
    assert!(recs.iter().all(|r| r["system"] == "base" && r["n"] == 2));
    let f1 = recs.iter().find(|r| r["metric"] == "ROUGE-L (F1)").unwrap();
    assert!(f1["mean"].as_f64().unwrap() >= 50.0);
    let out = cli(&["eval", "--bundles", &named, "--references", p(&refs)], "");
    assert_eq!(out.code, 0);
    assert!(out.stdout.contains("ROUGE-L (Recall)"));

    std::fs::write(&refs, "{\"question_id\":\"a\",\"answer\":\"x\"}\n").unwrap();
    let out = cli(&["eval", "--bundles", &named, "--references", p(&refs)], "");
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("question_id b"), "{}", out.stderr);
}

#[test]
fn stats_command() {
    let out = cli(&["stats", "--dataset", p(&fixture("dataset.jsonl")), "--format", "json"], "");
    assert_eq!(out.code, 0, "{}", out.stderr);
    let v: Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(v["total_inferences"], 12);
    assert_eq!(v["sources"]["reddit"]["pct_false_subjective"], 75.0);
    let out = cli(&["stats", "--dataset", p(&fixture("dataset.jsonl"))], "");
    assert_eq!(out.code, 0);
    let first = out.stdout.lines().nth(1).unwrap();
    assert_eq!(first.split_whitespace().collect::<Vec<_>>(), ["#", "questions", "2", "2", "1"]);
    assert!(out.stdout.contains("not_addressed"));

    let out = cli(&["stats", "--dataset", p(&fixture("dataset_invalid.jsonl"))], "");
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains(":2:") && out.stderr.contains("inferences.plausibility"), "{}", out.stderr);

    let out = cli(&["stats", "--import", "--dataset", p(&fixture("released.json")), "--format", "json"], "");
    assert_eq!(out.code, 0, "{}", out.stderr);
    let v: Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(v["sources"]["rosie"]["n_inferences"], 3);
    assert_eq!(v["sources"]["reddit"]["n_unknown"], 1);
}

#[test]
fn reddit_filter_command() {
    let out = cli(&["reddit-filter", "--posts", p(&fixture("reddit_posts.jsonl"))], "");
    assert_eq!(out.code, 0, "{}", out.stderr);
    let kept: Vec<Value> = out.stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let ids: Vec<&str> = kept.iter().map(|v| v["id"].as_str().unwrap()).collect();
    let expected = std::fs::read_to_string(fixture("reddit_expected.txt")).unwrap();
    assert_eq!(ids, expected.lines().collect::<Vec<_>>());
    assert_eq!(kept[0]["matched_markers"]["assumption_correcting"][0], "actually,");
    assert_eq!(kept[1]["matched_markers"]["expertise_invoking"][0], "as a nurse");
    assert!(kept[0]["comments"].is_array());

    let out = cli(&["reddit-filter", "--posts", p(&fixture("reddit_posts.jsonl")), "--min-comment-score", "1"], "");
    assert!(out.stdout.contains("\"p02\""));
}

#[test]
fn nq_select_command() {
    let dir = tempfile::tempdir().unwrap();
    let seeds = dir.path().join("seeds.txt");
    let pool = dir.path().join("pool.txt");
    std::fs::write(&seeds, "when can babies eat solid food\n").unwrap();
    std::fs::write(&pool, "how tall is everest\nwhen can babies eat solid food\nwho wrote hamlet\n").unwrap();
    let out = cli(&["nq-select", "--seeds", p(&seeds), "--pool", p(&pool), "--k-per-seed", "1"], "");
    assert_eq!(out.code, 0, "{}", out.stderr);
    let v: Value = serde_json::from_str(out.stdout.trim()).unwrap();
    assert_eq!(v["index"], 1);
}
