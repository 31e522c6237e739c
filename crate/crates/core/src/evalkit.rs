//! Answer-quality metrics and agreement statistics.
//!
//! ROUGE-L here is the single-reference, sentence-agnostic variant over
//! lowercased whitespace tokens (no stemming, no stopword removal).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("reference has no tokens")]
    EmptyReference,
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {0} observations")]
    TooFew(usize),
    #[error("kappa is undefined: expected agreement is 1")]
    DegenerateLabels,
    #[error("spearman is undefined for constant input")]
    ConstantInput,
    #[error("system {system} has metric set different from {first}")]
    MetricSetMismatch { system: String, first: String },
}

/// Length of the longest common subsequence (O(|a|·|b|) time, O(|b|) space).
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RougeOptions {
    pub lowercase: bool,
}

impl Default for RougeOptions {
    fn default() -> Self {
        Self { lowercase: true }
    }
}

pub fn rouge_l(candidate: &str, reference: &str) -> Result<RougeScore, EvalError> {
    rouge_l_with(candidate, reference, RougeOptions::default())
}

pub fn rouge_l_with(candidate: &str, reference: &str, opts: RougeOptions) -> Result<RougeScore, EvalError> {
    let tokens = |s: &str| -> Vec<String> {
        s.split_whitespace()
            .map(|t| {
                if opts.lowercase {
                    t.chars().flat_map(char::to_lowercase).collect()
                } else {
                    t.to_string()
                }
            })
            .collect()
    };
    let reference = tokens(reference);
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let candidate = tokens(candidate);
    if candidate.is_empty() {
        return Ok(RougeScore { precision: 0.0, recall: 0.0, f1: 0.0 });
    }
    let lcs = lcs_len(&candidate, &reference) as f64;
    let precision = lcs / candidate.len() as f64;
    let recall = lcs / reference.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(RougeScore { precision, recall, f1 })
}

/// Cohen's kappa for two raters over the same items.
pub fn cohens_kappa<L: Ord>(a: &[L], b: &[L]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(EvalError::TooFew(1));
    }
    let n = a.len() as f64;
    let mut marginals: BTreeMap<&L, (usize, usize)> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        marginals.entry(x).or_default().0 += 1;
        marginals.entry(y).or_default().1 += 1;
        agree += usize::from(x == y);
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = marginals
        .values()
        .map(|(ca, cb)| (*ca as f64 / n) * (*cb as f64 / n))
        .sum();
    if p_e >= 1.0 {
        return Err(EvalError::DegenerateLabels);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(EvalError::TooFew(2));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ConstantInput);
    }
    Ok(sxy / libm::sqrt(sxx * syy))
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(EvalError::TooFew(2));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 when n = 1.
    pub std: f64,
    pub n: usize,
}

pub fn aggregate(values: &[f64]) -> Result<MetricSummary, EvalError> {
    if values.is_empty() {
        return Err(EvalError::TooFew(1));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        libm::sqrt(ss / (n - 1) as f64)
    };
    Ok(MetricSummary { mean, std, n })
}

/// Learned or remote answer scorers that are not computed in-process.
pub trait ExternalScorer: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, candidate: &str, reference: &str, question: Option<&str>) -> Result<f64, ScorerError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("scorer {scorer} failed: {message}")]
pub struct ScorerError {
    pub scorer: String,
    pub message: String,
}

pub const ROUGE_L_F1: &str = "ROUGE-L (F1)";
pub const ROUGE_L_RECALL: &str = "ROUGE-L (Recall)";

/// One machine-readable summary line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub system: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Per-system metric values, kept in first-seen order for both systems and
/// metrics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportInput {
    systems: Vec<(String, Vec<(String, Vec<f64>)>)>,
}

impl ReportInput {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, system: &str, metric: &str, value: f64) {
        self.extend(system, metric, [value]);
    }

    pub fn extend(&mut self, system: &str, metric: &str, values: impl IntoIterator<Item = f64>) {
        let idx = match self.systems.iter().position(|(s, _)| s == system) {
            Some(i) => i,
            None => {
                self.systems.push((system.to_string(), Vec::new()));
                self.systems.len() - 1
            }
        };
        let metrics = &mut self.systems[idx].1;
        match metrics.iter_mut().find(|(m, _)| m == metric) {
            Some((_, v)) => v.extend(values),
            None => metrics.push((metric.to_string(), values.into_iter().collect())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub systems: Vec<String>,
    pub metrics: Vec<String>,
    /// `cells[metric][system]`
    pub cells: Vec<Vec<MetricSummary>>,
}

/// ROUGE rows use one decimal, everything else two.
fn decimals(metric: &str) -> usize {
    if metric.to_ascii_lowercase().starts_with("rouge") {
        1
    } else {
        2
    }
}

pub fn format_cell(metric: &str, s: &MetricSummary) -> String {
    let d = decimals(metric);
    format!("{:.d$}_({:.d$})", s.mean, s.std)
}

impl Report {
    pub fn build(input: &ReportInput) -> Result<Self, EvalError> {
        let Some((first, first_metrics)) = input.systems.first() else {
            return Err(EvalError::TooFew(1));
        };
        let metrics: Vec<String> = first_metrics.iter().map(|(m, _)| m.clone()).collect();
        let mut sorted = metrics.clone();
        sorted.sort();
        for (system, ms) in &input.systems {
            let mut names: Vec<String> = ms.iter().map(|(m, _)| m.clone()).collect();
            names.sort();
            if names != sorted {
                return Err(EvalError::MetricSetMismatch {
                    system: system.clone(),
                    first: first.clone(),
                });
            }
        }
        let mut cells = Vec::with_capacity(metrics.len());
        for metric in &metrics {
            let mut row = Vec::with_capacity(input.systems.len());
            for (_, ms) in &input.systems {
                let values = &ms.iter().find(|(m, _)| m == metric).expect("checked above").1;
                row.push(aggregate(values)?);
            }
            cells.push(row);
        }
        Ok(Self {
            systems: input.systems.iter().map(|(s, _)| s.clone()).collect(),
            metrics,
            cells,
        })
    }

    /// Text table: metrics as rows, systems as columns, two-space gutters,
    /// every column left-aligned to its widest entry.
    pub fn render_table(&self) -> String {
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec![String::from("metric")];
        header.extend(self.systems.iter().cloned());
        rows.push(header);
        for (metric, cells) in self.metrics.iter().zip(&self.cells) {
            let mut row = vec![metric.clone()];
            row.extend(cells.iter().map(|c| format_cell(metric, c)));
            rows.push(row);
        }
        let ncols = rows[0].len();
        let widths: Vec<usize> = (0..ncols)
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &rows {
            let mut line = String::new();
            for (c, cell) in row.iter().enumerate() {
                if c > 0 {
                    line.push_str("  ");
                }
                let _ = write!(line, "{cell:<w$}", w = widths[c]);
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }

    pub fn records(&self) -> Vec<MetricRecord> {
        let mut out = Vec::new();
        for (system_idx, system) in self.systems.iter().enumerate() {
            for (metric, cells) in self.metrics.iter().zip(&self.cells) {
                let s = cells[system_idx];
                out.push(MetricRecord {
                    system: system.clone(),
                    metric: metric.clone(),
                    mean: s.mean,
                    std: s.std,
                    n: s.n,
                });
            }
        }
        out
    }
}
