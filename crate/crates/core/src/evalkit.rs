//! Answer normalization, EM/F1, dataset parsing, sampling and bench reports.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::engine::{Counters, RunFailure, RunResult, DISCLAIMED};
use crate::journal::Outcome;
use crate::retrieval::Document;

/// Lowercase, drop punctuation, drop the articles a/an/the, collapse
/// whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let stripped: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation() && !is_unicode_punct(*c))
        .collect();
    let words: Vec<&str> = stripped
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect();
    words.join(" ")
}

fn is_unicode_punct(c: char) -> bool {
    matches!(
        c,
        '\u{2018}' | '\u{2019}' | '\u{201c}' | '\u{201d}' | '\u{2013}' | '\u{2014}' | '\u{2026}'
    )
}

pub fn em(pred: &str, gold: &str) -> f64 {
    if normalize_answer(pred) == normalize_answer(gold) {
        1.0
    } else {
        0.0
    }
}

pub fn f1(pred: &str, gold: &str) -> f64 {
    let p = normalize_answer(pred);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    match (pt.is_empty(), gt.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    // Multiset overlap.
    let mut remaining = gt.clone();
    let mut overlap = 0usize;
    for t in &pt {
        if let Some(i) = remaining.iter().position(|g| g == t) {
            remaining.swap_remove(i);
            overlap += 1;
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pt.len() as f64;
    let recall = overlap as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Disclaimers score zero regardless of the gold answer.
pub fn score(pred: &str, gold: &str) -> (f64, f64) {
    if pred == DISCLAIMED {
        (0.0, 0.0)
    } else {
        (em(pred, gold), f1(pred, gold))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAExample {
    pub id: String,
    pub question: String,
    pub gold_answer: String,
    /// `(title, passage)` pairs.
    pub context: Vec<(String, String)>,
}

impl QAExample {
    /// Corpus documents for this example's context, ids `"{id}#{index}"`.
    pub fn documents(&self) -> Vec<Document> {
        self.context
            .iter()
            .enumerate()
            .map(|(i, (t, p))| Document::new(format!("{}#{i}", self.id), t.as_str(), p.as_str()))
            .collect()
    }
}

/// Documents for every example, in example order.
pub fn corpus(examples: &[QAExample]) -> Vec<Document> {
    examples.iter().flat_map(QAExample::documents).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetFormat {
    #[serde(rename = "hotpot")]
    Hotpot,
    #[serde(rename = "2wiki")]
    TwoWiki,
    #[serde(rename = "musique")]
    Musique,
}

impl DatasetFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetFormat::Hotpot => "hotpot",
            DatasetFormat::TwoWiki => "2wiki",
            DatasetFormat::Musique => "musique",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_lowercase().trim_end_matches("-style") {
            "hotpot" | "hotpotqa" => Some(DatasetFormat::Hotpot),
            "2wiki" | "2wikimultihopqa" | "2wikimqa" => Some(DatasetFormat::TwoWiki),
            "musique" => Some(DatasetFormat::Musique),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("record {record}: {reason}")]
    Record { record: usize, reason: String },
    #[error("{0}")]
    Document(String),
}

fn field<'v>(v: &'v Value, names: &[&str]) -> Option<&'v Value> {
    names.iter().find_map(|n| v.get(*n))
}

fn text_field(v: &Value, names: &[&str]) -> Result<String, String> {
    match field(v, names) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(other) => Err(format!("field `{}` is not a string: {other}", names[0])),
        None => Err(format!("missing field `{}`", names[0])),
    }
}

fn hotpot_record(v: &Value) -> Result<QAExample, String> {
    let id = text_field(v, &["_id", "id"])?;
    let question = text_field(v, &["question"])?;
    let gold_answer = text_field(v, &["answer"])?;
    let mut context = Vec::new();
    let ctx = field(v, &["context"])
        .and_then(Value::as_array)
        .ok_or("missing array `context`")?;
    for (i, entry) in ctx.iter().enumerate() {
        let pair = entry.as_array().filter(|a| a.len() == 2);
        let (title, sents) = match pair {
            Some(p) => (&p[0], &p[1]),
            None => return Err(format!("context[{i}] is not a [title, sentences] pair")),
        };
        let title = title.as_str().ok_or(format!("context[{i}] title is not a string"))?;
        let passage = match sents {
            Value::String(s) => s.clone(),
            Value::Array(parts) => {
                let mut out = String::new();
                for p in parts {
                    let s = p.as_str().ok_or(format!("context[{i}] sentence is not a string"))?;
                    out.push_str(s);
                }
                out
            }
            _ => return Err(format!("context[{i}] sentences are not a list")),
        };
        context.push((title.to_string(), passage.trim().to_string()));
    }
    check_example(QAExample {
        id,
        question,
        gold_answer,
        context,
    })
}

fn musique_record(v: &Value) -> Result<QAExample, String> {
    let id = text_field(v, &["id", "_id"])?;
    let question = text_field(v, &["question"])?;
    let gold_answer = text_field(v, &["answer"])?;
    let paras = field(v, &["paragraphs"])
        .and_then(Value::as_array)
        .ok_or("missing array `paragraphs`")?;
    let mut context = Vec::new();
    for (i, p) in paras.iter().enumerate() {
        let title = text_field(p, &["title"]).map_err(|e| format!("paragraphs[{i}]: {e}"))?;
        let text = text_field(p, &["paragraph_text", "text"]).map_err(|e| format!("paragraphs[{i}]: {e}"))?;
        context.push((title, text));
    }
    check_example(QAExample {
        id,
        question,
        gold_answer,
        context,
    })
}

fn check_example(ex: QAExample) -> Result<QAExample, String> {
    if ex.question.trim().is_empty() {
        return Err("empty question".to_string());
    }
    if ex.gold_answer.trim().is_empty() {
        return Err("empty answer".to_string());
    }
    Ok(ex)
}

/// Parses a dataset in its published validation layout: a JSON array for
/// hotpot and 2wiki, one JSON object per line for musique. A JSON array is
/// accepted for musique as well.
pub fn parse_dataset(text: &str, format: DatasetFormat) -> Result<Vec<QAExample>, ParseError> {
    let record = match format {
        DatasetFormat::Hotpot | DatasetFormat::TwoWiki => hotpot_record,
        DatasetFormat::Musique => musique_record,
    };
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        let all: Vec<Value> =
            serde_json::from_str(text).map_err(|e| ParseError::Document(e.to_string()))?;
        return all
            .iter()
            .enumerate()
            .map(|(i, v)| record(v).map_err(|reason| ParseError::Record { record: i, reason }))
            .collect();
    }
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).map_err(|e| ParseError::Line {
            line: i + 1,
            reason: e.to_string(),
        })?;
        let ex = record(&v).map_err(|reason| ParseError::Line { line: i + 1, reason })?;
        if !seen.insert(ex.id.clone()) {
            return Err(ParseError::Line {
                line: i + 1,
                reason: format!("duplicate id `{}`", ex.id),
            });
        }
        out.push(ex);
    }
    Ok(out)
}

/// `n` examples chosen by a seeded ChaCha8 stream, in their original order.
/// Returns everything when `n` covers the list.
pub fn sample<T: Clone>(items: &[T], n: usize, seed: u64) -> Vec<T> {
    if n >= items.len() {
        return items.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, items.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| items[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub id: String,
    pub question: String,
    pub gold: String,
    pub prediction: String,
    pub em: f64,
    pub f1: f64,
    pub outcome: Outcome,
    pub counters: Counters,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl BenchRow {
    pub fn from_run(ex: &QAExample, run: &Result<RunResult, RunFailure>) -> Self {
        let (prediction, outcome, counters, error) = match run {
            Ok(r) => (r.answer.clone(), r.outcome(), r.trace.counters, None),
            Err(f) => (
                DISCLAIMED.to_string(),
                Outcome::Disclaimed,
                f.trace.as_ref().map(|t| t.counters).unwrap_or_default(),
                Some(f.error.to_string()),
            ),
        };
        let (em, f1) = score(&prediction, &ex.gold_answer);
        BenchRow {
            id: ex.id.clone(),
            question: ex.question.clone(),
            gold: ex.gold_answer.clone(),
            prediction,
            em,
            f1,
            outcome,
            counters,
            error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub dataset: String,
    pub n: usize,
    pub em: f64,
    pub f1: f64,
    pub disclaimed: usize,
    pub errors: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    /// Aggregates are plain means over the rows; an empty report scores 0.
    pub fn aggregate(dataset: &str, rows: Vec<BenchRow>) -> Self {
        let n = rows.len();
        let mean = |f: fn(&BenchRow) -> f64| {
            if n == 0 {
                0.0
            } else {
                rows.iter().map(f).sum::<f64>() / n as f64
            }
        };
        BenchReport {
            dataset: dataset.to_string(),
            n,
            em: mean(|r| r.em),
            f1: mean(|r| r.f1),
            disclaimed: rows.iter().filter(|r| r.outcome == Outcome::Disclaimed).count(),
            errors: rows.iter().filter(|r| r.error.is_some()).count(),
            rows,
        }
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{}: n={} EM={:.4} F1={:.4} disclaimed={} errors={}",
            self.dataset, self.n, self.em, self.f1, self.disclaimed, self.errors
        )
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let headers = ["id", "em", "f1", "lbt", "gbt", "chal", "prediction", "gold"];
        let cells: Vec<[String; 8]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.id.clone(),
                    format!("{:.0}", r.em),
                    format!("{:.3}", r.f1),
                    r.counters.local_backtracks.to_string(),
                    r.counters.global_rollbacks.to_string(),
                    r.counters.challenges.to_string(),
                    r.prediction.clone(),
                    r.gold.clone(),
                ]
            })
            .collect();
        let mut widths = headers.map(|h| h.chars().count());
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |fields: &[&str]| {
            let parts: Vec<String> = fields
                .iter()
                .zip(widths)
                .map(|(f, w)| format!("{f:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&headers);
        for row in &cells {
            let refs: Vec<&str> = row.iter().map(String::as_str).collect();
            line(&refs);
        }
        let _ = writeln!(out, "{}", self.summary_line());
        out
    }
}

/// Runs every example through `run` in order and aggregates.
pub fn run_rows<F>(dataset: &str, examples: &[QAExample], mut run: F) -> BenchReport
where
    F: FnMut(&QAExample) -> Result<RunResult, RunFailure>,
{
    let rows = examples.iter().map(|ex| BenchRow::from_run(ex, &run(ex))).collect();
    BenchReport::aggregate(dataset, rows)
}
