//! The six agent roles, their JSON output schemas and the backend boundary.

pub mod backend;
pub mod facts;
pub mod prompts;
pub mod roles;

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::format;
use core::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kstore::AgentId;
use crate::retrieval::EvidenceItem;

pub use backend::{Backend, BackendError, BackendRequest, ScriptTable, ScriptedBackend};
pub use facts::{parse_fact_line, FactDraft};
pub use roles::*;

/// Re-prompts allowed after an unparsable reply.
pub const REPAIR_BUDGET: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Decomposer,
    Retriever,
    Verifier,
    Assembler,
    Supervisor,
    Controller,
}

impl AgentRole {
    pub const ALL: [AgentRole; 6] = [
        AgentRole::Decomposer,
        AgentRole::Retriever,
        AgentRole::Verifier,
        AgentRole::Assembler,
        AgentRole::Supervisor,
        AgentRole::Controller,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Decomposer => "decomposer",
            AgentRole::Retriever => "retriever",
            AgentRole::Verifier => "verifier",
            AgentRole::Assembler => "assembler",
            AgentRole::Supervisor => "supervisor",
            AgentRole::Controller => "controller",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == s)
    }

    pub fn agent_id(self) -> AgentId {
        AgentId::new(self.as_str())
    }

    pub fn default_temperature(self) -> f64 {
        match self {
            AgentRole::Decomposer => 0.8,
            _ => 0.6,
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An agent output type with its own validity rules beyond JSON shape.
pub trait Schema: DeserializeOwned + Serialize {
    const ROLE: AgentRole;

    fn check(&self) -> Result<(), String> {
        Ok(())
    }
}

fn none_string() -> String {
    "none".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposerOutput {
    pub sub_questions: Vec<String>,
    #[serde(default)]
    pub decomposition_reasoning: String,
}

impl Schema for DecomposerOutput {
    const ROLE: AgentRole = AgentRole::Decomposer;

    fn check(&self) -> Result<(), String> {
        if self.sub_questions.iter().any(|q| q.trim().is_empty()) {
            return Err("empty sub-question".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieverOutput {
    pub retrieved_evidence: Vec<EvidenceItem>,
    #[serde(default)]
    pub retrieval_reasoning: String,
}

impl Schema for RetrieverOutput {
    const ROLE: AgentRole = AgentRole::Retriever;

    fn check(&self) -> Result<(), String> {
        for e in &self.retrieved_evidence {
            if let Some(c) = e.confidence {
                if !(0.0..=1.0).contains(&c) {
                    return Err(format!("confidence {c} for `{}` outside [0, 1]", e.source));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierOutput {
    pub verified_facts: Vec<String>,
    #[serde(default)]
    pub conflicts_detected: Vec<String>,
    #[serde(default = "none_string")]
    pub local_backtracking_action: String,
}

impl VerifierOutput {
    pub fn backtracked(&self) -> bool {
        self.local_backtracking_action != "none"
    }
}

impl Schema for VerifierOutput {
    const ROLE: AgentRole = AgentRole::Verifier;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblerOutput {
    pub final_answer: String,
    #[serde(default)]
    pub partial_answer_synthesis: Vec<String>,
    #[serde(default = "none_string")]
    pub escalation_signal: String,
}

impl AssemblerOutput {
    pub fn escalated(&self) -> bool {
        self.escalation_signal != "none"
    }
}

impl Schema for AssemblerOutput {
    const ROLE: AgentRole = AgentRole::Assembler;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisorOutput {
    pub conflict_summary: Vec<String>,
    pub global_backtracking_decision: String,
    pub updated_consensus_state: Vec<String>,
    #[serde(default)]
    pub reasoning_notes: String,
}

impl SupervisorOutput {
    pub fn rolled_back(&self) -> bool {
        self.global_backtracking_decision != "none"
    }
}

impl Schema for SupervisorOutput {
    const ROLE: AgentRole = AgentRole::Supervisor;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterventionType {
    Challenge,
    Override,
    Escalate,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerOutput {
    pub intervention_type: InterventionType,
    pub target_of_intervention: String,
    pub rationale: String,
    #[serde(default)]
    pub meta_notes: String,
}

impl Schema for ControllerOutput {
    const ROLE: AgentRole = AgentRole::Controller;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("{role} backend failed: {reason}")]
    BackendFailure { role: AgentRole, reason: String },
    #[error("{role} output for `{key}` violates its schema: {reason}")]
    SchemaViolation {
        role: AgentRole,
        key: String,
        reason: String,
    },
    #[error("decomposition produced no sub-questions")]
    EmptyDecomposition,
    #[error("question is empty")]
    EmptyQuestion,
}

/// A parsed agent reply plus the number of backend calls it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Invocation<T> {
    pub output: T,
    pub calls: u32,
}

/// Pulls the JSON object out of a reply: drops code fences and keeps the
/// span from the first `{` to the last `}`.
pub fn extract_json(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    (end > start).then(|| &raw[start..=end])
}

pub fn parse_reply<T: Schema>(raw: &str) -> Result<T, String> {
    let body = extract_json(raw).ok_or_else(|| "no JSON object in reply".to_string())?;
    let value: T = serde_json::from_str(body).map_err(|e| e.to_string())?;
    value.check()?;
    Ok(value)
}

/// Calls the backend for `T::ROLE` and parses the reply, re-prompting up to
/// [`REPAIR_BUDGET`] times when it does not fit the schema.
pub fn invoke<T: Schema>(
    backend: &dyn Backend,
    key: &str,
    input: &str,
    temperature: f64,
) -> Result<Invocation<T>, AgentError> {
    let role = T::ROLE;
    let system = prompts::template(role);
    let mut user = input.to_string();
    let mut last_error = String::new();
    for attempt in 0..=REPAIR_BUDGET {
        let req = BackendRequest {
            role,
            key,
            system,
            user: &user,
            temperature,
            attempt,
        };
        let raw = match backend.complete(&req) {
            Ok(raw) => raw,
            Err(BackendError::MissingScript(k)) => {
                return Err(AgentError::SchemaViolation {
                    role,
                    key: k,
                    reason: "no scripted reply".to_string(),
                })
            }
            Err(BackendError::Failure(reason)) => {
                return Err(AgentError::BackendFailure { role, reason })
            }
        };
        match parse_reply::<T>(&raw) {
            Ok(output) => {
                return Ok(Invocation {
                    output,
                    calls: attempt + 1,
                })
            }
            Err(e) => {
                last_error = e;
                user = prompts::repair(input, &last_error);
            }
        }
    }
    Err(AgentError::SchemaViolation {
        role,
        key: key.to_string(),
        reason: last_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn temperatures() {
        assert_eq!(AgentRole::Decomposer.default_temperature(), 0.8);
        for r in &AgentRole::ALL[1..] {
            assert_eq!(r.default_temperature(), 0.6);
        }
    }

    #[test]
    fn extracts_fenced_json() {
        let raw = "Here you go:\n```json\n{\"final_answer\": \"California\"}\n```";
        let out: AssemblerOutput = parse_reply(raw).unwrap();
        assert_eq!(out.final_answer, "California");
        assert!(!out.escalated());
        assert!(parse_reply::<AssemblerOutput>("no json").is_err());
        assert!(parse_reply::<AssemblerOutput>("{\"answer\": 1}").is_err());
    }

    #[test]
    fn schema_checks() {
        let bad = r#"{"retrieved_evidence":[{"source":"d","content":"x","confidence":1.2}]}"#;
        assert!(parse_reply::<RetrieverOutput>(bad).is_err());
        let ok = r#"{"retrieved_evidence":[{"source":"d","content":"x"}],"retrieval_reasoning":"r"}"#;
        assert_eq!(parse_reply::<RetrieverOutput>(ok).unwrap().retrieved_evidence[0].confidence, None);
        let c = r#"{"intervention_type":"challenge","target_of_intervention":"f1","rationale":"r"}"#;
        assert_eq!(
            parse_reply::<ControllerOutput>(c).unwrap().intervention_type,
            InterventionType::Challenge
        );
        let c = r#"{"intervention_type":"veto","target_of_intervention":"f1","rationale":"r"}"#;
        assert!(parse_reply::<ControllerOutput>(c).is_err());
        assert!(parse_reply::<DecomposerOutput>(r#"{"sub_questions":["a"," "]}"#).is_err());
    }

    #[test]
    fn repair_loop_counts_calls() {
        let mut b = ScriptedBackend::new();
        b.insert(
            AgentRole::Assembler,
            "q",
            vec!["{not json".to_string(), r#"{"final_answer":"x"}"#.to_string()],
        );
        let inv = invoke::<AssemblerOutput>(&b, "q", "input", 0.6).unwrap();
        assert_eq!(inv.output.final_answer, "x");
        assert_eq!(inv.calls, 2);
        assert_eq!(b.calls(), 2);
    }

    #[test]
    fn repair_budget_exhausted() {
        let mut b = ScriptedBackend::new();
        b.insert(AgentRole::Assembler, "q", vec!["nope".to_string()]);
        let err = invoke::<AssemblerOutput>(&b, "q", "input", 0.6).unwrap_err();
        assert!(matches!(err, AgentError::SchemaViolation { .. }));
        assert_eq!(b.calls(), 3);
    }

    #[test]
    fn scripted_miss_names_key() {
        let b = ScriptedBackend::new();
        match invoke::<DecomposerOutput>(&b, "unknown question", "x", 0.8) {
            Err(AgentError::SchemaViolation { key, role, .. }) => {
                assert_eq!(key, "unknown question");
                assert_eq!(role, AgentRole::Decomposer);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
