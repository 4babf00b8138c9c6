//! The line format agents use for facts:
//! `subject | predicate | object | polarity | confidence`.
//! Polarity and confidence may be omitted.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::format;

use crate::kstore::{Assertion, Pattern, Polarity};

#[derive(Debug, Clone, PartialEq)]
pub struct FactDraft {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub polarity: Polarity,
    pub confidence: Option<f64>,
}

impl FactDraft {
    pub fn into_assertion(self, id: impl Into<String>, default_confidence: f64) -> Assertion {
        Assertion::new(id, self.subject, self.predicate, self.object)
            .with_polarity(self.polarity)
            .with_confidence(self.confidence.unwrap_or(default_confidence))
    }

    pub fn pattern(&self) -> Pattern {
        Assertion::new("", &self.subject, &self.predicate, &self.object)
            .with_polarity(self.polarity)
            .pattern()
    }
}

pub fn parse_polarity(s: &str) -> Option<Polarity> {
    match s.trim().to_lowercase().as_str() {
        "positive" | "pos" | "+" | "true" => Some(Polarity::Positive),
        "negative" | "neg" | "-" | "false" | "not" => Some(Polarity::Negative),
        _ => None,
    }
}

pub fn parse_fact_line(line: &str) -> Result<FactDraft, String> {
    let parts: Vec<&str> = line.split('|').map(str::trim).collect();
    if !(3..=5).contains(&parts.len()) {
        return Err(format!("expected 3 to 5 `|`-separated fields, got {}", parts.len()));
    }
    if parts[..3].iter().any(|p| p.is_empty()) {
        return Err("subject, predicate and object must be non-empty".to_string());
    }
    let polarity = match parts.get(3) {
        None => Polarity::Positive,
        Some(p) => parse_polarity(p).ok_or_else(|| format!("bad polarity `{p}`"))?,
    };
    let confidence = match parts.get(4) {
        None => None,
        Some(c) => {
            let v: f64 = c.parse().map_err(|_| format!("bad confidence `{c}`"))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("confidence {v} outside [0, 1]"));
            }
            Some(v)
        }
    };
    Ok(FactDraft {
        subject: parts[0].to_string(),
        predicate: parts[1].to_string(),
        object: parts[2].to_string(),
        polarity,
        confidence,
    })
}
