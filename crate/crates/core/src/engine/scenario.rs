use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::agents::{parse_fact_line, ScriptTable};
use crate::kstore::{Assertion, Pattern, PredicateRegistry, PredicateSchema};

use super::{ConfigError, EngineConfig};

/// A self-contained scripted run: question, predicate schemas, axioms and
/// canned agent replies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
    #[serde(default)]
    pub predicates: Vec<PredicateSchema>,
    /// Fact lines that must hold for the whole run.
    #[serde(default)]
    pub axioms: Vec<String>,
    /// Fact lines expected to become true at some point.
    #[serde(default)]
    pub eventually: Vec<String>,
    /// Partial config applied on top of the caller's config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    /// Puzzle mode: hypotheses checked in order.
    #[serde(default)]
    pub hypotheses: Vec<String>,
    #[serde(default)]
    pub script: ScriptTable,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario JSON: {0}")]
    Json(String),
    #[error("bad fact line `{line}`: {reason}")]
    FactLine { line: String, reason: String },
    #[error("predicate registry: {0}")]
    Registry(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Json(e.to_string()))
    }

    pub fn registry(&self) -> Result<PredicateRegistry, ScenarioError> {
        PredicateRegistry::from_schemas(self.predicates.iter().cloned())
            .map_err(|e| ScenarioError::Registry(e.to_string()))
    }

    /// Axioms as protected assertions with ids `ax-1`, `ax-2`, ...
    pub fn axiom_assertions(&self) -> Result<Vec<Assertion>, ScenarioError> {
        self.axioms
            .iter()
            .enumerate()
            .map(|(i, line)| {
                parse_fact_line(line)
                    .map(|d| d.into_assertion(format!("ax-{}", i + 1), 1.0).protect())
                    .map_err(|reason| ScenarioError::FactLine {
                        line: line.clone(),
                        reason,
                    })
            })
            .collect()
    }

    pub fn eventually_patterns(&self) -> Result<Vec<Pattern>, ScenarioError> {
        self.eventually
            .iter()
            .map(|line| {
                parse_fact_line(line)
                    .map(|d| d.pattern())
                    .map_err(|reason| ScenarioError::FactLine {
                        line: line.clone(),
                        reason,
                    })
            })
            .collect()
    }

    /// `base` with this scenario's overrides applied.
    pub fn effective_config(&self, base: &EngineConfig) -> Result<EngineConfig, ScenarioError> {
        Ok(match &self.config {
            Some(o) => base.with_overrides(o)?,
            None => base.clone(),
        })
    }
}
