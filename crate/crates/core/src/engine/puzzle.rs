//! Hypothesis elimination: each candidate is checked by its own agent
//! against the shared axioms and backtracked if it leads to a conflict.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::agents::{self, extract_facts, AgentRole, Backend};
use crate::journal::{JournalEntry, JournalError, Outcome, Timeline};
use crate::kstore::{minimal_conflict_set, AgentId, Assertion, Scope};
use crate::retrieval::EvidenceItem;

use super::{EngineConfig, EngineError, Scenario};

pub const CULPRIT_SUBJECT: &str = "case";
pub const CULPRIT_PREDICATE: &str = "culprit";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisTrace {
    pub label: String,
    pub agent: AgentId,
    pub facts: Vec<String>,
    pub consistent: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conflict: Option<String>,
    pub backtracked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuzzleTrace {
    pub hypotheses: Vec<HypothesisTrace>,
    pub survivors: Vec<String>,
    pub backend_calls: u64,
    pub journal: Vec<JournalEntry>,
}

#[derive(Debug, Clone)]
pub struct PuzzleResult {
    pub answer: String,
    /// More than one hypothesis survived; `answer` is the first.
    pub ambiguous: bool,
    pub trace: PuzzleTrace,
    pub timeline: Timeline,
}

fn checker(label: &str) -> AgentId {
    AgentId::new(format!("checker-{label}"))
}

/// Checks each hypothesis of `scenario` in order. Hypothesis facts come from
/// the verifier script keyed by the hypothesis label.
pub fn run_puzzle(
    scenario: &Scenario,
    cfg: &EngineConfig,
    backend: &dyn Backend,
) -> Result<PuzzleResult, EngineError> {
    let cfg = scenario
        .effective_config(cfg)
        .map_err(|e| EngineError::Config(super::ConfigError(e.to_string())))?;
    cfg.validate()?;
    let bad = |e: super::ScenarioError| EngineError::Config(super::ConfigError(e.to_string()));
    let reg = scenario.registry().map_err(bad)?;
    let mut tl = Timeline::new(reg.clone()).with_local_depth(cfg.local_bt_depth);
    let sup = AgentRole::Supervisor.agent_id();
    tl.register_agent(&sup);
    for ax in scenario.axiom_assertions().map_err(bad)? {
        tl.assert_statement(&sup, ax.with_source(sup.as_str()))?;
    }
    let mut calls = 0u64;
    let mut traces = Vec::new();
    let mut survivors = Vec::new();
    for label in &scenario.hypotheses {
        let agent = checker(label);
        tl.register_agent(&agent);
        let cp = tl.take_checkpoint(Scope::Agent(agent.clone()));
        let item = EvidenceItem {
            source: label.clone(),
            content: format!("Suppose the culprit is {label}. {}", scenario.question),
            confidence: None,
        };
        let inv = extract_facts(backend, &scenario.question, &item, cfg.temperatures.verifier)
            .inspect_err(|_| calls += 1)?;
        calls += inv.calls as u64;
        let mut facts = Vec::new();
        for (i, line) in inv.output.verified_facts.iter().enumerate() {
            if let Ok(d) = agents::parse_fact_line(line) {
                facts.push(d.into_assertion(format!("h-{label}-{}", i + 1), 1.0));
            }
        }
        facts.push(Assertion::new(
            format!("h-{label}-0"),
            CULPRIT_SUBJECT,
            CULPRIT_PREDICATE,
            label.as_str(),
        ));
        let mut admitted = Vec::new();
        for f in facts {
            let a = tl.assert_statement(&agent, f.with_source(agent.as_str()))?;
            admitted.push(a);
        }
        // Judged against the axioms and this checker's own set only, so
        // earlier survivors do not decide later hypotheses.
        let mut scope: Vec<Assertion> = tl
            .knowledge_set(&sup)
            .map(|s| s.to_vec())
            .unwrap_or_default();
        scope.extend(admitted.iter().cloned());
        let conflict = minimal_conflict_set(&scope, &reg, tl.now()).ok().map(|r| {
            let members: Vec<&Assertion> = scope.iter().filter(|a| r.members.contains(&a.id)).collect();
            agents::describe_conflict(&members)
        });
        let consistent = conflict.is_none();
        let mut backtracked = false;
        if consistent {
            survivors.push(label.clone());
        } else {
            match tl.backtrack_local(&agent, &cp.id) {
                Ok(_) => backtracked = true,
                Err(JournalError::DepthExceeded { .. }) => {
                    for a in &admitted {
                        tl.challenge(&sup, &a.id, "hypothesis discarded")?;
                    }
                }
                Err(e) => return Err(e.into()),
            }
        }
        traces.push(HypothesisTrace {
            label: label.clone(),
            agent,
            facts: admitted.iter().map(|a| a.to_string()).collect(),
            consistent,
            conflict,
            backtracked,
        });
    }

    let Some(answer) = survivors.first().cloned() else {
        tl.record_final_answer(&sup, super::DISCLAIMED, Outcome::Disclaimed);
        return Err(EngineError::NoConsistentHypothesis);
    };
    tl.record_final_answer(&AgentRole::Assembler.agent_id(), &answer, Outcome::Answered);
    Ok(PuzzleResult {
        answer,
        ambiguous: survivors.len() > 1,
        trace: PuzzleTrace {
            hypotheses: traces,
            survivors,
            backend_calls: calls,
            journal: tl.entries().to_vec(),
        },
        timeline: tl,
    })
}
