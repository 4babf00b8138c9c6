//! System prompts sent to chat backends. Field names match the schemas.

use alloc::format;
use alloc::string::String;

use super::AgentRole;

const FACT_FORMAT: &str = "Write every fact on its own line as \
`subject | predicate | object | polarity | confidence`, where polarity is \
`positive` or `negative` and confidence is a number from 0 to 1.";

pub fn template(role: AgentRole) -> &'static str {
    match role {
        AgentRole::Decomposer => DECOMPOSER,
        AgentRole::Retriever => RETRIEVER,
        AgentRole::Verifier => VERIFIER,
        AgentRole::Assembler => ASSEMBLER,
        AgentRole::Supervisor => SUPERVISOR,
        AgentRole::Controller => CONTROLLER,
    }
}

pub fn fact_format() -> &'static str {
    FACT_FORMAT
}

/// User message for a repair attempt.
pub fn repair(input: &str, error: &str) -> String {
    format!(
        "{input}\n\nYour last reply could not be used ({error}). \
         Answer again with a single JSON object and nothing else."
    )
}

const DECOMPOSER: &str = "You split a multi-hop question into short sub-questions \
that can each be answered from a single passage. Order them so later ones may \
build on earlier answers, and keep the entities from the original question. \
Reply with JSON only:\n\
{\"sub_questions\": [\"...\"], \"decomposition_reasoning\": \"...\"}";

const RETRIEVER: &str = "You select passages that help answer one sub-question. \
Return each useful passage with its source id and, if you can judge it, a \
confidence between 0 and 1. Reply with JSON only:\n\
{\"retrieved_evidence\": [{\"source\": \"...\", \"content\": \"...\", \"confidence\": 0.0}], \
\"retrieval_reasoning\": \"...\"}";

const VERIFIER: &str = "You read one evidence passage for a sub-question and \
extract the facts it states that bear on that sub-question. Use short, \
lowercase subjects and predicates, and the same predicate name for the same \
relation. Only report what the passage supports. Write every fact on its own \
line as `subject | predicate | object | polarity | confidence`, where \
polarity is `positive` or `negative` and confidence is a number from 0 to 1. \
Reply with JSON only:\n\
{\"verified_facts\": [\"...\"], \"conflicts_detected\": [\"...\"], \
\"local_backtracking_action\": \"none\"}";

const ASSEMBLER: &str = "You receive a question and the facts that survived \
verification. Give the shortest answer the facts support: an entity, a name, \
a number, or yes/no, without explanation. If the facts contradict each other \
on something the answer depends on, leave final_answer empty and explain in \
escalation_signal. Reply with JSON only:\n\
{\"final_answer\": \"...\", \"partial_answer_synthesis\": [\"...\"], \
\"escalation_signal\": \"none\"}";

const SUPERVISOR: &str = "You resolve contradictions that span several agents. \
Name the smallest set of statements that cannot hold together, decide how far \
back to roll the shared state, and list what remains accepted. Reply with JSON \
only:\n\
{\"conflict_summary\": [\"...\"], \"global_backtracking_decision\": \"none\", \
\"updated_consensus_state\": [\"...\"], \"reasoning_notes\": \"...\"}";

const CONTROLLER: &str = "You step in only when the same contradiction keeps \
coming back or cannot be rolled back. Pick one intervention and its target \
assertion. Reply with JSON only:\n\
{\"intervention_type\": \"challenge | override | escalate | none\", \
\"target_of_intervention\": \"...\", \"rationale\": \"...\", \"meta_notes\": \"...\"}";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_name_their_fields() {
        let fields: [(AgentRole, &[&str]); 6] = [
            (AgentRole::Decomposer, &["sub_questions", "decomposition_reasoning"]),
            (AgentRole::Retriever, &["retrieved_evidence", "retrieval_reasoning", "confidence"]),
            (AgentRole::Verifier, &["verified_facts", "conflicts_detected", "local_backtracking_action"]),
            (AgentRole::Assembler, &["final_answer", "partial_answer_synthesis", "escalation_signal"]),
            (AgentRole::Supervisor, &["conflict_summary", "global_backtracking_decision", "updated_consensus_state", "reasoning_notes"]),
            (AgentRole::Controller, &["intervention_type", "target_of_intervention", "rationale", "meta_notes"]),
        ];
        for (role, names) in fields {
            for n in names {
                assert!(template(role).contains(n), "{role} template lacks {n}");
            }
        }
        assert!(template(AgentRole::Verifier).contains(fact_format()));
    }
}
