//! Grading and metrics: final-answer extraction, chrF, and evaluation reports.

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonl::{Provenance, RecordWriter};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("reference text is empty")]
    EmptyReference,
    #[error("invalid chrF parameters: {0}")]
    Params(String),
    #[error("{predictions} predictions for {truths} truths")]
    LengthMismatch { predictions: usize, truths: usize },
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(\$\s*)?(\d{1,3}(?:,\d{3})+|\d+)(?:\.(\d+))?").expect("valid regex")
    })
}

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)final\s+price").expect("valid regex"))
}

struct Found {
    cents: i64,
    currency: bool,
}

fn to_cents(int_part: &str, frac: Option<&str>) -> Option<i64> {
    let whole: i64 = int_part.replace(',', "").parse().ok()?;
    let frac = frac.unwrap_or("");
    let digits: Vec<i64> = frac.bytes().map(|b| i64::from(b - b'0')).collect();
    let mut cents = whole.checked_mul(100)?;
    cents += digits.first().copied().unwrap_or(0) * 10 + digits.get(1).copied().unwrap_or(0);
    if digits.get(2).copied().unwrap_or(0) >= 5 {
        cents += 1;
    }
    Some(cents)
}

fn numbers(text: &str) -> Vec<Found> {
    number_re()
        .captures_iter(text)
        .filter_map(|c| {
            Some(Found {
                cents: to_cents(&c[2], c.get(3).map(|m| m.as_str()))?,
                currency: c.get(1).is_some(),
            })
        })
        .collect()
}

/// Extracts the final dollar amount from model output, in cents.
///
/// Prefers the first currency amount (else the first number) after the last
/// case-insensitive "final price" marker; otherwise the last currency amount
/// in the text, else the last number. Thousands separators are stripped and
/// more than two decimals round half-up to cents.
pub fn extract_final_answer(text: &str) -> Option<i64> {
    if let Some(m) = marker_re().find_iter(text).last() {
        let after = numbers(&text[m.end()..]);
        if let Some(f) = after.iter().find(|f| f.currency).or(after.first()) {
            return Some(f.cents);
        }
    }
    let all = numbers(text);
    all.iter()
        .rev()
        .find(|f| f.currency)
        .or(all.last())
        .map(|f| f.cents)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChrFParams {
    pub max_char_order: usize,
    pub beta: f64,
    pub whitespace_removed: bool,
}

impl Default for ChrFParams {
    fn default() -> Self {
        Self {
            max_char_order: 6,
            beta: 2.0,
            whitespace_removed: true,
        }
    }
}

impl ChrFParams {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.max_char_order < 1 {
            return Err(EvalError::Params("max_char_order must be at least 1".into()));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(EvalError::Params("beta must be positive".into()));
        }
        Ok(())
    }
}

/// Per-order n-gram counts for one or more sentence pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChrFStats {
    /// `(hypothesis n-grams, reference n-grams, clipped matches)` per order.
    pub orders: Vec<(u64, u64, u64)>,
}

impl ChrFStats {
    pub fn merge(&mut self, other: &ChrFStats) {
        if self.orders.len() < other.orders.len() {
            self.orders.resize(other.orders.len(), (0, 0, 0));
        }
        for (a, b) in self.orders.iter_mut().zip(&other.orders) {
            a.0 += b.0;
            a.1 += b.1;
            a.2 += b.2;
        }
    }

    /// Averages precision and recall over orders that have reference n-grams,
    /// then combines them into an F-score scaled to [0, 100].
    pub fn score(&self, beta: f64) -> f64 {
        let mut p_sum = 0.0;
        let mut r_sum = 0.0;
        let mut counted = 0usize;
        for &(hyp, reference, matches) in &self.orders {
            if reference == 0 {
                continue;
            }
            counted += 1;
            if hyp > 0 {
                p_sum += matches as f64 / hyp as f64;
            }
            r_sum += matches as f64 / reference as f64;
        }
        if counted == 0 {
            return 0.0;
        }
        let p = p_sum / counted as f64;
        let r = r_sum / counted as f64;
        let b2 = beta * beta;
        let denom = b2 * p + r;
        if denom == 0.0 {
            0.0
        } else {
            100.0 * (1.0 + b2) * p * r / denom
        }
    }
}

fn prepare(text: &str, params: &ChrFParams) -> Vec<char> {
    if params.whitespace_removed {
        text.chars().filter(|c| !c.is_whitespace()).collect()
    } else {
        text.chars().collect()
    }
}

fn ngram_counts(chars: &[char], n: usize) -> HashMap<&[char], u64> {
    let mut counts = HashMap::new();
    if chars.len() >= n {
        for w in chars.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

pub fn chrf_stats(hypothesis: &str, reference: &str, params: &ChrFParams) -> Result<ChrFStats, EvalError> {
    params.validate()?;
    let hyp = prepare(hypothesis, params);
    let reference = prepare(reference, params);
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let orders = (1..=params.max_char_order)
        .map(|n| {
            let h = ngram_counts(&hyp, n);
            let r = ngram_counts(&reference, n);
            let matches = h
                .iter()
                .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
                .sum();
            (h.values().sum(), r.values().sum(), matches)
        })
        .collect();
    Ok(ChrFStats { orders })
}

/// Sentence-level chrF in [0, 100].
pub fn chrf(hypothesis: &str, reference: &str, params: &ChrFParams) -> Result<f64, EvalError> {
    Ok(chrf_stats(hypothesis, reference, params)?.score(params.beta))
}

/// Corpus chrF from micro-averaged n-gram counts.
pub fn corpus_chrf(pairs: &[(&str, &str)], params: &ChrFParams) -> Result<f64, EvalError> {
    let mut total = ChrFStats::default();
    for (h, r) in pairs {
        total.merge(&chrf_stats(h, r, params)?);
    }
    Ok(total.score(params.beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Retail,
    Translation,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Truths {
    /// Final prices in cents.
    Retail(Vec<i64>),
    Translation(Vec<String>),
}

impl Truths {
    fn len(&self) -> usize {
        match self {
            Truths::Retail(v) => v.len(),
            Truths::Translation(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub prediction: String,
    pub truth: String,
    pub score: f64,
    pub parsed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub n: usize,
    /// Accuracy percent for retail, corpus chrF over pooled n-gram counts
    /// for translation.
    pub metric: f64,
    /// Mean of the per-sentence chrF scores (translation only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_mean: Option<f64>,
    pub parse_failures: usize,
    pub records: Vec<ExampleRecord>,
}

/// Retail outputs are correct when within one cent of the truth.
pub const RETAIL_TOLERANCE_CENTS: i64 = 1;

pub fn evaluate(
    ids: &[String],
    predictions: &[String],
    truths: &Truths,
    chrf_params: &ChrFParams,
) -> Result<EvalReport, EvalError> {
    if predictions.len() != truths.len() || ids.len() != predictions.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    let (task, records, corpus) = match truths {
        Truths::Retail(prices) => {
            let records = ids
                .iter()
                .zip(predictions)
                .zip(prices)
                .map(|((id, pred), &truth)| {
                    let parsed = extract_final_answer(pred);
                    let correct = parsed.is_some_and(|p| (p - truth).abs() <= RETAIL_TOLERANCE_CENTS);
                    ExampleRecord {
                        id: id.clone(),
                        prediction: pred.clone(),
                        truth: crate::retail::format_cents(truth),
                        score: if correct { 100.0 } else { 0.0 },
                        parsed: parsed.is_some(),
                    }
                })
                .collect::<Vec<_>>();
            (Task::Retail, records, None)
        }
        Truths::Translation(refs) => {
            let records = ids
                .iter()
                .zip(predictions)
                .zip(refs)
                .map(|((id, pred), reference)| {
                    Ok(ExampleRecord {
                        id: id.clone(),
                        prediction: pred.clone(),
                        truth: reference.clone(),
                        score: chrf(pred, reference, chrf_params)?,
                        parsed: true,
                    })
                })
                .collect::<Result<Vec<_>, EvalError>>()?;
            let pairs: Vec<(&str, &str)> = predictions
                .iter()
                .map(String::as_str)
                .zip(refs.iter().map(String::as_str))
                .collect();
            (Task::Translation, records, Some(corpus_chrf(&pairs, chrf_params)?))
        }
    };
    let n = records.len();
    let mean = if n == 0 {
        0.0
    } else {
        records.iter().map(|r| r.score).sum::<f64>() / n as f64
    };
    let (metric, sentence_mean) = match corpus {
        Some(c) => (c, Some(mean)),
        None => (mean, None),
    };
    let parse_failures = records.iter().filter(|r| !r.parsed).count();
    if parse_failures > 0 {
        log::warn!("{parse_failures} of {n} predictions had no parseable answer");
    }
    Ok(EvalReport {
        task,
        n,
        metric,
        sentence_mean,
        parse_failures,
        records,
    })
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum ReportLine<'a> {
    Meta(&'a Provenance),
    Example(&'a ExampleRecord),
    Summary {
        task: Task,
        n: usize,
        metric: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        sentence_mean: Option<f64>,
        parse_failures: usize,
    },
}

pub fn write_report(path: &Path, provenance: &Provenance, report: &EvalReport) -> std::io::Result<()> {
    let mut w = RecordWriter::create(path)?;
    w.write(&ReportLine::Meta(provenance))?;
    for r in &report.records {
        w.write(&ReportLine::Example(r))?;
    }
    w.write(&ReportLine::Summary {
        task: report.task,
        n: report.n,
        metric: report.metric,
        sentence_mean: report.sentence_mean,
        parse_failures: report.parse_failures,
    })
}
