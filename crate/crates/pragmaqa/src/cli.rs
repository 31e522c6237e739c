//! Command-line front end. Machine output goes to stdout, diagnostics to
//! stderr. Exit codes: 0 ok, 1 usage, 2 data, 3 backend.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pragmaqa_core::backend::BackendConfig;
use pragmaqa_core::corpus::{chunk_document, DEFAULT_CHUNK_SIZE};
use pragmaqa_core::dataset::{crosstab, stats, DatasetRecord, Source};
use pragmaqa_core::evalkit::{rouge_l, ExternalScorer, Report, ReportInput, ROUGE_L_F1, ROUGE_L_RECALL};
use pragmaqa_core::inference::InferenceError;
use pragmaqa_core::pipeline::{AnswerBundle, Mode};
use pragmaqa_core::retrieval::{build_index, nearest_neighbor_select, RetrievalError, DEFAULT_BATCH_SIZE, DEFAULT_K_PER_SEED};
use pragmaqa_core::sourcing::{
    classify_medical, default_rewrite_exemplars, filter_reddit, qualifying_markers, rewrite_title, MarkerLexicon,
    MarkerMatch, QuestionClass, RedditPost, DEFAULT_MIN_COMMENT_SCORE,
};
use serde::{Deserialize, Serialize};

use crate::config::{Config, ConfigError};
use crate::http::{HttpClient, HttpScorer};
use crate::runtime::{make_completer, make_embedder, AskRequest, Runtime, RuntimeError};
use crate::service::{serve, AppState};
use crate::store::{self, StoreError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "pragmaqa", version, about = "Pragmatic-inference-aware retrieval QA")]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Config override, e.g. `pipeline.n_retrieve=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Maximum worker threads for per-inference fan-out.
    #[arg(long, default_value_t = 1, global = true)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Baseline,
    Augmented,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Baseline => Mode::Baseline,
            ModeArg::Augmented => Mode::Augmented,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Chunk documents into passages.
    Ingest {
        #[arg(long)]
        docs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        chunk_size: Option<usize>,
    },
    /// Embed passages and write a vector index.
    Index {
        #[arg(long)]
        passages: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Answer one question.
    Ask(AskArgs),
    /// Generate pragmatic inferences for a question.
    Infer {
        /// Question text, or `-` to read stdin.
        #[arg(long)]
        question: String,
        /// Print the generation prompt without calling any backend.
        #[arg(long)]
        dry_run: bool,
    },
    /// Apply the marker and wh-word filters to Reddit posts.
    RedditFilter {
        #[arg(long)]
        posts: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_COMMENT_SCORE)]
        min_comment_score: i64,
        /// Drop posts the completer classifies as non-medical.
        #[arg(long)]
        classify: bool,
        /// Rewrite kept titles into self-contained questions.
        #[arg(long)]
        rewrite: bool,
    },
    /// Select pool questions near any seed question.
    NqSelect {
        /// One seed question per line.
        #[arg(long)]
        seeds: PathBuf,
        /// One pool question per line.
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K_PER_SEED)]
        k_per_seed: usize,
    },
    /// Score answer bundles against reference answers.
    Eval {
        /// Bundle file, optionally `name=path`. Repeatable; one system each.
        #[arg(long, required = true)]
        bundles: Vec<String>,
        /// Lines of `{"question_id", "answer"}`.
        #[arg(long)]
        references: PathBuf,
        /// Comma list of `rougeL` and `ext:NAME`.
        #[arg(long, default_value = "rougeL", value_delimiter = ',')]
        metrics: Vec<String>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Per-source dataset statistics.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        /// Read the released files through the import adapter.
        #[arg(long = "import")]
        import: bool,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Run the HTTP service.
    Serve {
        /// Overrides `service.bind`.
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct AskArgs {
    /// Question text, or `-` to read stdin.
    #[arg(long)]
    pub question: String,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Extra passages for the baseline.
    #[arg(long)]
    pub k: Option<usize>,
    /// Inference text for augmented mode. Repeatable; generated when absent.
    #[arg(long = "inference")]
    pub inferences: Vec<String>,
    #[arg(long)]
    pub question_id: Option<String>,
    /// Print the reader prompt without calling the reader.
    #[arg(long)]
    pub dry_run: bool,
}

/// Error carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(m: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: m.into(),
        }
    }

    fn data(m: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: m.into(),
        }
    }

    fn backend(m: impl Into<String>) -> Self {
        Self {
            code: EXIT_BACKEND,
            message: m.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        Failure::data(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::data(e.to_string())
    }
}

impl From<RuntimeError> for Failure {
    fn from(e: RuntimeError) -> Self {
        let code = match &e {
            RuntimeError::Usage(_) => EXIT_USAGE,
            RuntimeError::Backend { .. } | RuntimeError::Inference(InferenceError::ParseError) => EXIT_BACKEND,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<RetrievalError> for Failure {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Backend(b) => Failure::backend(b.to_string()),
            other => Failure::data(other.to_string()),
        }
    }
}

/// Console streams, injectable for tests.
pub struct Io<'a> {
    pub stdin: &'a mut dyn Read,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I, io: Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(io.stdout, "{}", e.render());
                    return EXIT_OK;
                }
                _ => EXIT_USAGE,
            };
            let _ = write!(io.stderr, "{}", e.render());
            return code;
        }
    };
    match execute(cli, io.stdin, io.stdout) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(io.stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn read_question(q: &str, stdin: &mut dyn Read) -> Result<String, Failure> {
    let text = if q == "-" {
        let mut s = String::new();
        stdin.read_to_string(&mut s)?;
        s
    } else {
        q.to_string()
    };
    let text = text.trim().to_string();
    if text.is_empty() {
        return Err(Failure::usage("question is empty"));
    }
    Ok(text)
}

fn json_line(out: &mut dyn Write, v: &impl Serialize) -> Result<(), Failure> {
    serde_json::to_writer(&mut *out, v).map_err(|e| Failure::data(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn execute(cli: Cli, stdin: &mut dyn Read, out: &mut dyn Write) -> Result<(), Failure> {
    if cli.jobs == 0 {
        return Err(Failure::usage("--jobs must be at least 1"));
    }
    let config = Config::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Ingest { docs, out: dest, chunk_size } => {
            let size = chunk_size.or(config.store.chunk_size).unwrap_or(DEFAULT_CHUNK_SIZE);
            if size == 0 {
                return Err(Failure::usage("chunk size must be at least 1"));
            }
            let documents = store::load_documents(&docs)?;
            let mut seen = std::collections::HashSet::new();
            let mut passages = Vec::new();
            for d in &documents {
                if !seen.insert(d.id.as_str()) {
                    return Err(Failure::data(format!("duplicate document id {}", d.id)));
                }
                passages.extend(chunk_document(d, size).map_err(|e| Failure::data(e.to_string()))?);
            }
            store::save_store(&passages, &dest)?;
            json_line(out, &serde_json::json!({"documents": documents.len(), "passages": passages.len()}))
        }
        Command::Index { passages, out: dest, batch_size } => {
            let ps = store::load_store(&passages)?;
            let embedder = make_embedder(&config.backends.embedder)?;
            let batch = batch_size.or(config.store.batch_size).unwrap_or(DEFAULT_BATCH_SIZE);
            let index = build_index(&ps, embedder.as_ref(), batch)?;
            store::save_index(&index, &dest)?;
            json_line(out, &serde_json::json!({"entries": index.len(), "dim": index.dim()}))
        }
        Command::Ask(args) => ask(config, cli.jobs, args, stdin, out),
        Command::Infer { question, dry_run } => {
            let question = read_question(&question, stdin)?;
            let exemplars = match &config.inference.exemplars {
                Some(p) => store::load_exemplars(p)?,
                None => pragmaqa_core::inference::ExemplarSet::builtin(),
            };
            let seed = config.inference.seed;
            if dry_run {
                let prompt = pragmaqa_core::inference::build_generation_prompt(&question, &exemplars, seed);
                writeln!(out, "{prompt}")?;
                return Ok(());
            }
            let completer = make_completer(&config.backends.completer)?;
            let inferences = pragmaqa_core::inference::generate_inferences(&question, &exemplars, seed, completer.as_ref())
                .map_err(RuntimeError::from)?;
            json_line(
                out,
                &serde_json::json!({"question": question, "exemplar_seed": seed, "inferences": inferences}),
            )
        }
        Command::RedditFilter {
            posts,
            min_comment_score,
            classify,
            rewrite,
        } => reddit_filter(&config, &posts, min_comment_score, classify, rewrite, out),
        Command::NqSelect { seeds, pool, k_per_seed } => {
            let read = |p: &Path| -> Result<Vec<String>, Failure> {
                Ok(std::fs::read_to_string(p)
                    .map_err(|e| Failure::data(format!("{}: {e}", p.display())))?
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(str::to_string)
                    .collect())
            };
            let seeds = read(&seeds)?;
            let pool = read(&pool)?;
            let embedder = make_embedder(&config.backends.embedder)?;
            let s: Vec<&str> = seeds.iter().map(String::as_str).collect();
            let p: Vec<&str> = pool.iter().map(String::as_str).collect();
            for i in nearest_neighbor_select(&s, &p, k_per_seed, embedder.as_ref())? {
                json_line(out, &serde_json::json!({"index": i, "text": pool[i]}))?;
            }
            Ok(())
        }
        Command::Eval {
            bundles,
            references,
            metrics,
            format,
        } => eval(&config, &bundles, &references, &metrics, format, out),
        Command::Stats { dataset, import, format } => {
            let records = if import {
                store::import_released(&dataset)?
            } else {
                store::load_dataset(&dataset)?
            };
            if records.is_empty() {
                return Err(Failure::data("dataset is empty"));
            }
            write_stats(&records, format, out)
        }
        Command::Serve { bind } => {
            let bind = bind.unwrap_or_else(|| config.service.bind.clone());
            let addr = bind
                .parse()
                .map_err(|e| Failure::usage(format!("bad bind address {bind}: {e}")))?;
            let runtime = Arc::new(Runtime::load(config, cli.jobs)?);
            let state = AppState::new(runtime);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(state, addr))
                .map_err(|e| Failure::data(format!("service failed: {e}")))
        }
    }
}

fn ask(config: Config, jobs: usize, args: AskArgs, stdin: &mut dyn Read, out: &mut dyn Write) -> Result<(), Failure> {
    let question = read_question(&args.question, stdin)?;
    let mode = Mode::from(args.mode);
    if mode == Mode::Augmented && args.k.is_some() {
        return Err(Failure::usage("--k applies to baseline mode only"));
    }
    if mode == Mode::Baseline && !args.inferences.is_empty() {
        return Err(Failure::usage("--inference applies to augmented mode only"));
    }
    if args.dry_run && mode == Mode::Augmented && args.inferences.is_empty() {
        return Err(Failure::usage("--dry-run in augmented mode needs --inference"));
    }
    let req = AskRequest {
        question,
        mode,
        k: args.k,
        inferences: (!args.inferences.is_empty()).then_some(args.inferences),
        question_id: args.question_id,
    };
    let runtime = Runtime::load(config, jobs)?;
    if args.dry_run {
        let draft = runtime.draft(&req)?;
        writeln!(out, "{}", draft.bundle.prompt_text)?;
        return Ok(());
    }
    let bundle = runtime.ask(&req)?;
    json_line(out, &bundle)
}

#[derive(Debug, Serialize)]
struct FilteredPost<'a> {
    #[serde(flatten)]
    post: &'a RedditPost,
    matched_markers: MarkerMatch,
    #[serde(skip_serializing_if = "Option::is_none")]
    classification: Option<QuestionClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rewrite: Option<String>,
}

fn reddit_filter(
    config: &Config,
    path: &Path,
    min_score: i64,
    classify: bool,
    rewrite: bool,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let posts: Vec<RedditPost> = store::read_jsonl(path)?;
    let lexicon = MarkerLexicon::default();
    let kept = filter_reddit(&posts, &lexicon, min_score);
    let completer = if classify || rewrite {
        Some(make_completer(&config.backends.completer)?)
    } else {
        None
    };
    let rewrite_exemplars = default_rewrite_exemplars();
    let backend_err = |e: pragmaqa_core::backend::BackendError| Failure::backend(e.to_string());
    for p in &kept {
        let mut class = None;
        if let (true, Some(c)) = (classify, &completer) {
            let cls = classify_medical(&p.title, c.as_ref()).map_err(backend_err)?;
            if cls == QuestionClass::NonMedical {
                continue;
            }
            class = Some(cls);
        }
        let question = match (rewrite, &completer) {
            (true, Some(c)) => Some(rewrite_title(&p.title, &p.description, &rewrite_exemplars, c.as_ref()).map_err(backend_err)?),
            _ => None,
        };
        json_line(
            out,
            &FilteredPost {
                post: p,
                matched_markers: qualifying_markers(p, &lexicon, min_score),
                classification: class,
                rewrite: question,
            },
        )?;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct Reference {
    question_id: String,
    answer: String,
    #[serde(default)]
    question: Option<String>,
}

fn split_named(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() && !name.contains(['/', '\\']) => (name.to_string(), PathBuf::from(path)),
        _ => {
            let p = PathBuf::from(spec);
            let name = p
                .file_stem()
                .map_or_else(|| spec.to_string(), |s| s.to_string_lossy().into_owned());
            (name, p)
        }
    }
}

enum Metric {
    RougeL,
    External(Box<dyn ExternalScorer>),
}

fn parse_metrics(config: &Config, names: &[String]) -> Result<Vec<Metric>, Failure> {
    names
        .iter()
        .map(|m| {
            let m = m.trim();
            if m.eq_ignore_ascii_case("rougel") || m.eq_ignore_ascii_case("rouge-l") {
                return Ok(Metric::RougeL);
            }
            let name = m
                .strip_prefix("ext:")
                .ok_or_else(|| Failure::usage(format!("unknown metric {m}")))?;
            let spec = config
                .scorers
                .get(name)
                .ok_or_else(|| Failure::usage(format!("no [scorers.{name}] section in config")))?;
            let mut bc = BackendConfig::new(spec.endpoint.clone(), name);
            bc.credential_env = spec.credential_env.clone();
            bc.timeout_ms = spec.timeout_ms;
            let client = HttpClient::new(bc).map_err(|e| Failure::usage(e.to_string()))?;
            Ok(Metric::External(Box::new(HttpScorer::new(name, client))))
        })
        .collect()
}

fn eval(
    config: &Config,
    bundle_specs: &[String],
    references: &Path,
    metric_names: &[String],
    format: Format,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let metrics = parse_metrics(config, metric_names)?;
    let refs: Vec<Reference> = store::read_jsonl(references)?;
    let refs: BTreeMap<&str, &Reference> = refs.iter().map(|r| (r.question_id.as_str(), r)).collect();
    let mut input = ReportInput::new();
    for spec in bundle_specs {
        let (system, path) = split_named(spec);
        let bundles: Vec<AnswerBundle> = store::read_jsonl(&path)?;
        if bundles.is_empty() {
            return Err(Failure::data(format!("{}: no bundles", path.display())));
        }
        for b in &bundles {
            let id = b
                .question_id
                .as_deref()
                .ok_or_else(|| Failure::data(format!("{}: bundle without question_id", path.display())))?;
            let r = refs
                .get(id)
                .ok_or_else(|| Failure::data(format!("no reference for question_id {id}")))?;
            for m in &metrics {
                match m {
                    Metric::RougeL => {
                        let s = rouge_l(&b.answer_text, &r.answer)
                            .map_err(|e| Failure::data(format!("question_id {id}: {e}")))?;
                        input.push(&system, ROUGE_L_F1, 100.0 * s.f1);
                        input.push(&system, ROUGE_L_RECALL, 100.0 * s.recall);
                    }
                    Metric::External(scorer) => {
                        let q = r.question.as_deref().or(Some(b.question.as_str()));
                        let v = scorer
                            .score(&b.answer_text, &r.answer, q)
                            .map_err(|e| Failure::backend(e.to_string()))?;
                        input.push(&system, scorer.name(), v);
                    }
                }
            }
        }
    }
    let report = Report::build(&input).map_err(|e| Failure::data(e.to_string()))?;
    match format {
        Format::Table => write!(out, "{}", report.render_table())?,
        Format::Json => {
            for rec in report.records() {
                json_line(out, &rec)?;
            }
        }
    }
    Ok(())
}

fn write_stats(records: &[DatasetRecord], format: Format, out: &mut dyn Write) -> Result<(), Failure> {
    let per_source = stats(records);
    let table = crosstab(records);
    match format {
        Format::Json => {
            let cells: Vec<_> = table
                .counts
                .iter()
                .map(|(k, (a, n))| {
                    serde_json::json!({"veracity": k.veracity, "itype": k.itype, "addressed": a, "not_addressed": n})
                })
                .collect();
            let sources: BTreeMap<&str, _> = per_source.iter().map(|(s, v)| (s.as_str(), v)).collect();
            json_line(
                out,
                &serde_json::json!({
                    "sources": sources,
                    "total_inferences": per_source.values().map(|s| s.n_inferences).sum::<usize>(),
                    "crosstab": cells,
                }),
            )
        }
        Format::Table => {
            let present: Vec<Source> = Source::ALL.into_iter().filter(|s| per_source.contains_key(s)).collect();
            let mut rows: Vec<Vec<String>> = vec![std::iter::once(String::new())
                .chain(present.iter().map(|s| s.as_str().to_string()))
                .collect()];
            type Cell = fn(&pragmaqa_core::dataset::SourceStats) -> String;
            let lines: [(&str, Cell); 6] = [
                ("# questions", |s| s.n_questions.to_string()),
                ("ans. length (# sent)", |s| format!("{:.1}", s.mean_answer_sentences)),
                ("# inferences", |s| s.n_inferences.to_string()),
                ("% false/subjective", |s| format!("{:.1}", s.pct_false_subjective)),
                ("% true", |s| format!("{:.1}", s.pct_true)),
                ("# unknown veracity", |s| s.n_unknown.to_string()),
            ];
            for (label, f) in lines {
                rows.push(
                    std::iter::once(label.to_string())
                        .chain(present.iter().map(|s| f(&per_source[s])))
                        .collect(),
                );
            }
            let widths: Vec<usize> = (0..rows[0].len())
                .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
                .collect();
            for r in &rows {
                let line: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
                writeln!(out, "{}", line.join("  ").trim_end())?;
            }
            if !table.is_empty() {
                writeln!(out)?;
                writeln!(out, "veracity    type            addressed  not_addressed")?;
                for (k, (a, n)) in &table.counts {
                    let v = serde_json::to_value(k.veracity).unwrap_or_default();
                    let t = serde_json::to_value(k.itype).unwrap_or_default();
                    writeln!(
                        out,
                        "{:<10}  {:<14}  {:<9}  {}",
                        v.as_str().unwrap_or(""),
                        t.as_str().unwrap_or(""),
                        a,
                        n
                    )?;
                }
            }
            Ok(())
        }
    }
}
