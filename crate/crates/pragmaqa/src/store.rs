//! Line-delimited JSON files: documents, passages, index, dataset,
//! exemplars and Reddit posts.
//!
//! Floats are written with shortest round-trip formatting, so a reloaded
//! index is bit-identical and a second save is byte-identical.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use pragmaqa_core::backend::EmbeddingVector;
use pragmaqa_core::corpus::{Document, Passage, PassageStore};
use pragmaqa_core::dataset::{DatasetRecord, Source};
use pragmaqa_core::inference::{
    Evidence, Exemplar, ExemplarSet, InferenceType, PragmaticInference, Veracity,
};
use pragmaqa_core::retrieval::VectorIndex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: corrupt record: {message}")]
    CorruptRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: record {record}: invalid {field}")]
    Schema {
        path: PathBuf,
        line: usize,
        record: String,
        field: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Non-blank lines with their 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    read_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            serde_json::from_str(&text).map_err(|e| StoreError::CorruptRecord {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), StoreError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write_jsonl_to(&mut w, items).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn write_jsonl_to<T: Serialize>(w: &mut impl Write, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut *w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_documents(path: &Path) -> Result<Vec<Document>, StoreError> {
    read_jsonl(path)
}

pub fn save_store(passages: &[Passage], path: &Path) -> Result<(), StoreError> {
    write_jsonl(path, passages)
}

/// Load passages, checking each record and rejecting duplicate ids.
pub fn load_store(path: &Path) -> Result<Vec<Passage>, StoreError> {
    let lines = read_lines(path)?;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(lines.len());
    for (line, text) in lines {
        let corrupt = |message: String| StoreError::CorruptRecord {
            path: path.to_path_buf(),
            line,
            message,
        };
        let p: Passage = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        p.check().map_err(|e| corrupt(e.to_string()))?;
        if !seen.insert(p.id.clone()) {
            return Err(corrupt(format!("duplicate passage id {}", p.id)));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn load_passage_store(path: &Path) -> Result<PassageStore, StoreError> {
    let passages = load_store(path)?;
    PassageStore::new(passages).map_err(|e| StoreError::CorruptRecord {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexRecord {
    passage_id: String,
    vector: Vec<f64>,
}

pub fn save_index(index: &VectorIndex, path: &Path) -> Result<(), StoreError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for (id, v) in index.entries() {
        let rec = IndexRecord {
            passage_id: id.to_string(),
            vector: v.to_vec(),
        };
        serde_json::to_writer(&mut w, &rec)
            .map_err(std::io::Error::from)
            .map_err(io_err(path))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn load_index(path: &Path) -> Result<VectorIndex, StoreError> {
    let lines = read_lines(path)?;
    let mut entries = Vec::with_capacity(lines.len());
    for (line, text) in &lines {
        let corrupt = |message: String| StoreError::CorruptRecord {
            path: path.to_path_buf(),
            line: *line,
            message,
        };
        let rec: IndexRecord = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
        let v = EmbeddingVector::new(rec.vector).map_err(|e| corrupt(e.to_string()))?;
        entries.push((rec.passage_id, v));
    }
    VectorIndex::from_normalized(entries).map_err(|e| StoreError::CorruptRecord {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}

pub fn load_exemplars(path: &Path) -> Result<ExemplarSet, StoreError> {
    let items: Vec<Exemplar> = read_jsonl(path)?;
    Ok(ExemplarSet { items })
}

pub fn save_exemplars(set: &ExemplarSet, path: &Path) -> Result<(), StoreError> {
    write_jsonl(path, &set.items)
}

fn record_id(v: &Value) -> String {
    ["question_id", "id"]
        .iter()
        .find_map(|k| v.get(*k).and_then(Value::as_str))
        .unwrap_or("?")
        .to_string()
}

/// `inferences[3].veracity` -> `inferences.veracity`
fn field_name(path: &serde_path_to_error::Path) -> String {
    path.iter()
        .filter_map(|seg| match seg {
            serde_path_to_error::Segment::Map { key } => Some(key.clone()),
            _ => None,
        })
        .collect::<Vec<_>>()
        .join(".")
}

/// Load the native dataset format, validating every record.
pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, StoreError> {
    let mut out = Vec::new();
    for (line, text) in read_lines(path)? {
        let value: Value = serde_json::from_str(&text).map_err(|e| StoreError::CorruptRecord {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        let record = record_id(&value);
        let schema = |field: String| StoreError::Schema {
            path: path.to_path_buf(),
            line,
            record: record.clone(),
            field,
        };
        let rec: DatasetRecord = serde_path_to_error::deserialize(&value).map_err(|e| {
            let f = field_name(e.path());
            schema(if f.is_empty() { "record".into() } else { f })
        })?;
        rec.validate().map_err(|e| schema(e.field))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn save_dataset(records: &[DatasetRecord], path: &Path) -> Result<(), StoreError> {
    write_jsonl(path, records)
}

// ---------------------------------------------------------------------------
// Import adapter
// ---------------------------------------------------------------------------

fn str_field<'a>(v: &'a Value, keys: &[&str]) -> Option<&'a str> {
    keys.iter().find_map(|k| v.get(*k).and_then(Value::as_str))
}

fn parse_source(raw: &str) -> Option<Source> {
    let s = raw.trim().to_ascii_lowercase();
    if s.contains("rosie") || s.contains("maternal") {
        Some(Source::Rosie)
    } else if s.contains("reddit") {
        Some(Source::Reddit)
    } else if s == "nq" || s.contains("natural") {
        Some(Source::Nq)
    } else {
        None
    }
}

/// Released labels: `unsure` is folded into subjective.
pub fn parse_veracity(raw: &str) -> Option<Veracity> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" | "t" | "yes" => Some(Veracity::True),
        "false" | "f" | "no" => Some(Veracity::False),
        "subjective" | "unsure" | "false/unsure" => Some(Veracity::Subjective),
        "" | "unknown" | "na" | "n/a" | "none" => Some(Veracity::Unknown),
        _ => None,
    }
}

fn parse_itype(raw: &str) -> Option<InferenceType> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "presupposition" => Some(InferenceType::Presupposition),
        "implicature" => Some(InferenceType::Implicature),
        "" | "unlabeled" | "none" => Some(InferenceType::Unlabeled),
        _ => None,
    }
}

fn parse_bool(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "yes" | "true" | "addressed" => Some(true),
            "no" | "false" | "not addressed" => Some(false),
            _ => None,
        },
        Value::Number(n) => n.as_i64().map(|x| x != 0),
        _ => None,
    }
}

/// Map one loosely-typed row into a [`DatasetRecord`]. Accepted aliases:
/// `question_id|id`, `question|question_text`, `answer|expert_answer`,
/// `inference|text` and `type|itype`.
pub fn import_row(v: &Value) -> Result<DatasetRecord, (String, String)> {
    let qid = record_id(v);
    let bad = |f: &str| (qid.clone(), f.to_string());
    let source = str_field(v, &["source", "dataset"])
        .and_then(parse_source)
        .ok_or_else(|| bad("source"))?;
    let question_text = str_field(v, &["question_text", "question"])
        .ok_or_else(|| bad("question_text"))?
        .to_string();
    let expert_answer = str_field(v, &["expert_answer", "answer"])
        .filter(|s| !s.trim().is_empty())
        .map(str::to_string);
    let mut inferences = Vec::new();
    for (i, row) in v
        .get("inferences")
        .and_then(Value::as_array)
        .map(Vec::as_slice)
        .unwrap_or_default()
        .iter()
        .enumerate()
    {
        let (text, row) = match row {
            Value::String(s) => (s.clone(), &Value::Null),
            _ => (
                str_field(row, &["text", "inference"])
                    .ok_or_else(|| bad("inferences.text"))?
                    .to_string(),
                row,
            ),
        };
        let veracity = match row.get("veracity") {
            None | Some(Value::Null) => Veracity::Unknown,
            Some(Value::String(s)) => parse_veracity(s).ok_or_else(|| bad("inferences.veracity"))?,
            Some(Value::Bool(b)) => {
                if *b {
                    Veracity::True
                } else {
                    Veracity::False
                }
            }
            Some(_) => return Err(bad("inferences.veracity")),
        };
        let itype = match str_field(row, &["itype", "type"]) {
            None => InferenceType::Unlabeled,
            Some(s) => parse_itype(s).ok_or_else(|| bad("inferences.itype"))?,
        };
        let plausibility = match row.get("plausibility") {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(xs)) => xs
                .iter()
                .map(|x| x.as_u64().filter(|r| (1..=5).contains(r)).map(|r| r as u8))
                .collect::<Option<Vec<u8>>>()
                .ok_or_else(|| bad("inferences.plausibility"))?,
            Some(x) => vec![x
                .as_u64()
                .filter(|r| (1..=5).contains(r))
                .ok_or_else(|| bad("inferences.plausibility"))? as u8],
        };
        let addressed = match row.get("addressed") {
            None | Some(Value::Null) => None,
            Some(x) => Some(parse_bool(x).ok_or_else(|| bad("inferences.addressed"))?),
        };
        let evidence = str_field(row, &["evidence_url", "url"]).map(|url| Evidence {
            url: url.to_string(),
            passage_text: str_field(row, &["evidence", "evidence_text", "passage_text"])
                .unwrap_or_default()
                .to_string(),
        });
        inferences.push(PragmaticInference {
            id: str_field(row, &["id"]).map_or_else(|| format!("{qid}-{i}"), str::to_string),
            question_id: qid.clone(),
            text,
            veracity,
            itype,
            plausibility,
            addressed,
            evidence,
        });
    }
    let rec = DatasetRecord {
        question_id: qid.clone(),
        source,
        question_text,
        expert_answer,
        inferences,
    };
    rec.validate().map_err(|e| (e.record, e.field))?;
    Ok(rec)
}

/// Import a released-format file: a JSON array of rows or one row per line.
pub fn import_released(path: &Path) -> Result<Vec<DatasetRecord>, StoreError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let rows: Vec<(usize, Value)> = if text.trim_start().starts_with('[') {
        let all: Vec<Value> = serde_json::from_str(&text).map_err(|e| StoreError::CorruptRecord {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        all.into_iter().enumerate().map(|(i, v)| (i + 1, v)).collect()
    } else {
        read_jsonl::<Value>(path)?
            .into_iter()
            .enumerate()
            .map(|(i, v)| (i + 1, v))
            .collect()
    };
    rows.into_iter()
        .map(|(line, v)| {
            import_row(&v).map_err(|(record, field)| StoreError::Schema {
                path: path.to_path_buf(),
                line,
                record,
                field,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn veracity_mapping() {
        assert_eq!(parse_veracity("Unsure"), Some(Veracity::Subjective));
        assert_eq!(parse_veracity("FALSE"), Some(Veracity::False));
        assert_eq!(parse_veracity("maybe"), None);
    }

    #[test]
    fn import_row_aliases() {
        let row = json!({
            "id": "r1", "source": "Reddit", "question": "Why?", "answer": "Because.",
            "inferences": [
                {"inference": "A", "veracity": "unsure", "type": "Implicature", "plausibility": [4, 5], "addressed": "yes"},
                "B"
            ]
        });
        let rec = import_row(&row).unwrap();
        assert_eq!(rec.source, Source::Reddit);
        assert_eq!(rec.inferences[0].veracity, Veracity::Subjective);
        assert_eq!(rec.inferences[0].addressed, Some(true));
        assert_eq!(rec.inferences[1].id, "r1-1");
        assert_eq!(rec.inferences[1].veracity, Veracity::Unknown);
        let bad = json!({"id": "r2", "source": "nq", "question": "Q", "inferences": [{"text": "x", "plausibility": 9}]});
        assert_eq!(import_row(&bad).unwrap_err().1, "inferences.plausibility");
    }

    #[test]
    fn schema_error_names_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        std::fs::write(
            &p,
            r#"{"question_id":"q1","source":"nq","question_text":"Q?","inferences":[{"id":"i","question_id":"q1","text":"t","veracity":"maybe","itype":"implicature"}]}"#,
        )
        .unwrap();
        match load_dataset(&p) {
            Err(StoreError::Schema { record, field, line, .. }) => {
                assert_eq!((record.as_str(), field.as_str(), line), ("q1", "inferences.veracity", 1));
            }
            other => panic!("{other:?}"),
        }
    }
}
