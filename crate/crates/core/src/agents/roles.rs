//! Role behaviour. Decomposer, retriever, verifier (fact extraction) and
//! assembler consult the backend; verification bookkeeping, the supervisor
//! and the controller are deterministic.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use super::{
    invoke, AgentError, AssemblerOutput, ControllerOutput, DecomposerOutput, InterventionType,
    Invocation, RetrieverOutput, SupervisorOutput, VerifierOutput,
};
use crate::agents::backend::Backend;
use crate::journal::{JournalError, RollbackOutcome, Timeline};
use crate::kstore::{
    consistent, minimal_conflict_set, normalize_term, retraction_candidate, AgentId, Assertion,
    ConflictReport, Polarity, PredicateRegistry, Scope,
};
use crate::retrieval::EvidenceItem;

/// Predicates the engine uses for its own bookkeeping records.
pub const SUBQUESTION_PREDICATE: &str = "sub question";
pub const EVIDENCE_PREDICATE: &str = "evidence for";
/// A fact with this predicate names the answer directly.
pub const ANSWER_PREDICATE: &str = "answer";

pub fn describe_conflict(members: &[&Assertion]) -> String {
    let parts: Vec<String> = members
        .iter()
        .map(|a| {
            format!(
                "{} | {} | {} | {}",
                a.subject,
                a.predicate,
                a.object,
                a.polarity.as_str()
            )
        })
        .collect();
    parts.join(" conflicts with ")
}

pub fn decompose(
    backend: &dyn Backend,
    question: &str,
    max_subquestions: usize,
    temperature: f64,
) -> Result<Invocation<DecomposerOutput>, AgentError> {
    if question.trim().is_empty() {
        return Err(AgentError::EmptyQuestion);
    }
    let input = format!("Question: {question}\nUse at most {max_subquestions} sub-questions.");
    let mut inv = invoke::<DecomposerOutput>(backend, question, &input, temperature)?;
    inv.output.sub_questions.truncate(max_subquestions);
    if inv.output.sub_questions.is_empty() {
        return Err(AgentError::EmptyDecomposition);
    }
    Ok(inv)
}

pub fn retrieve_scripted(
    backend: &dyn Backend,
    sub_question: &str,
    temperature: f64,
) -> Result<Invocation<RetrieverOutput>, AgentError> {
    let input = format!("Sub-question: {sub_question}");
    invoke::<RetrieverOutput>(backend, sub_question, &input, temperature)
}

/// Asks the verifier backend for the facts one passage states.
pub fn extract_facts(
    backend: &dyn Backend,
    sub_question: &str,
    item: &EvidenceItem,
    temperature: f64,
) -> Result<Invocation<VerifierOutput>, AgentError> {
    let input = format!(
        "Sub-question: {sub_question}\nSource: {}\nPassage: {}",
        item.source, item.content
    );
    invoke::<VerifierOutput>(backend, &item.source, &input, temperature)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub output: VerifierOutput,
    /// Batch members live after verification.
    pub admitted: Vec<Assertion>,
    /// Batch members given up by local backtracking.
    pub discarded: Vec<Assertion>,
    /// `(old id, new id)` for survivors re-admitted after a local backtrack.
    pub renamed: Vec<(String, String)>,
    /// Duplicates and facts that were already known.
    pub skipped: usize,
    pub rollback: Option<RollbackOutcome>,
    /// A conflict local backtracking could not (or was not allowed to) fix.
    pub escalation: Option<ConflictReport>,
}

/// Admits a batch of new facts into `verifier`'s set.
///
/// Identical facts in the batch collapse to the most confident copy and
/// facts already live anywhere are skipped. If the batch makes the set
/// inconsistent and the conflict lies entirely inside the batch, the
/// verifier backtracks to the checkpoint taken just before the batch and
/// re-admits the batch
/// minus the assertions chosen by the retraction order. Anything else is
/// returned as an escalation.
pub fn verify(
    timeline: &mut Timeline,
    verifier: &AgentId,
    batch: Vec<Assertion>,
    fresh_id: &mut dyn FnMut() -> String,
) -> Result<VerifyOutcome, JournalError> {
    let reg = timeline.registry().clone();
    let mut kept: Vec<Assertion> = Vec::new();
    let mut skipped = 0;
    for a in batch {
        match kept.iter().position(|k| k.key() == a.key()) {
            Some(i) => {
                skipped += 1;
                if a.confidence > kept[i].confidence {
                    kept[i] = a;
                }
            }
            None => kept.push(a),
        }
    }
    let global = timeline.global_set();
    let before = kept.len();
    kept.retain(|a| !global.entails(a));
    skipped += before - kept.len();

    let mut outcome = VerifyOutcome {
        output: VerifierOutput {
            verified_facts: Vec::new(),
            conflicts_detected: Vec::new(),
            local_backtracking_action: "none".to_string(),
        },
        admitted: Vec::new(),
        discarded: Vec::new(),
        renamed: Vec::new(),
        skipped,
        rollback: None,
        escalation: None,
    };
    if kept.is_empty() {
        return Ok(outcome);
    }

    // A fresh checkpoint: the state just before this batch was adopted.
    let checkpoint = timeline.take_checkpoint(Scope::Agent(verifier.clone()));
    let mut admitted = Vec::with_capacity(kept.len());
    for a in kept {
        admitted.push(timeline.assert_statement(verifier, a)?);
    }
    let vset = timeline.knowledge_set(verifier).expect("verifier registered").clone();
    if vset.is_consistent(&reg) {
        outcome.output.verified_facts = admitted.iter().map(|a| a.to_string()).collect();
        outcome.admitted = admitted;
        return Ok(outcome);
    }

    let psi = minimal_conflict_set(&vset.to_vec(), &reg, timeline.now())?;
    let batch_ids: BTreeSet<&str> = admitted.iter().map(|a| a.id.as_str()).collect();
    let members: Vec<&Assertion> = psi.members.iter().filter_map(|id| vset.get(id)).collect();
    outcome.output.conflicts_detected.push(describe_conflict(&members));

    let internal = psi.members.iter().all(|id| batch_ids.contains(id.as_str()));
    let victims = if internal {
        batch_victims(&admitted, &reg)
    } else {
        None
    };
    let resolvable = victims.as_ref().is_some_and(|v| {
        let removed: BTreeSet<&str> = v.iter().map(|a| a.id.as_str()).collect();
        consistent(vset.iter().filter(|a| !removed.contains(a.id.as_str())), &reg)
    });

    if resolvable {
        match timeline.backtrack_local(verifier, &checkpoint.id) {
            Ok(rb) => {
                let victims = victims.expect("resolvable implies victims");
                let removed: BTreeSet<String> = victims.iter().map(|a| a.id.clone()).collect();
                for a in admitted.iter().filter(|a| !removed.contains(&a.id)) {
                    let mut again = a.clone();
                    again.id = fresh_id();
                    let again = timeline.assert_statement(verifier, again)?;
                    outcome.renamed.push((a.id.clone(), again.id.clone()));
                    outcome.admitted.push(again);
                }
                let dropped: Vec<String> = victims
                    .iter()
                    .map(|a| format!("{} (confidence {})", a, a.confidence))
                    .collect();
                outcome.output.local_backtracking_action = format!(
                    "reverted to {} and discarded {}",
                    rb.checkpoint,
                    dropped.join("; ")
                );
                outcome.output.verified_facts =
                    outcome.admitted.iter().map(|a| a.to_string()).collect();
                outcome.discarded = victims;
                outcome.rollback = Some(rb);
                return Ok(outcome);
            }
            Err(JournalError::DepthExceeded { .. }) => {}
            Err(e) => return Err(e),
        }
    }

    outcome.output.verified_facts = admitted.iter().map(|a| a.to_string()).collect();
    outcome.admitted = admitted;
    outcome.escalation = Some(psi);
    Ok(outcome)
}

/// Repeatedly removes the retraction candidate of a minimal conflict set
/// until the batch is consistent. `None` if a conflict has only protected
/// members.
fn batch_victims(batch: &[Assertion], reg: &PredicateRegistry) -> Option<Vec<Assertion>> {
    let mut remaining: Vec<Assertion> = batch.to_vec();
    let mut victims = Vec::new();
    while let Ok(psi) = minimal_conflict_set(&remaining, reg, 0) {
        let victim = retraction_candidate(
            remaining
                .iter()
                .filter(|a| psi.members.contains(&a.id) && !a.protected),
        )?
        .clone();
        remaining.retain(|a| a.id != victim.id);
        victims.push(victim);
    }
    Some(victims)
}

fn is_bookkeeping(a: &Assertion) -> bool {
    let p = normalize_term(&a.predicate);
    p == SUBQUESTION_PREDICATE || p == EVIDENCE_PREDICATE
}

/// Answer used when the assembler returns an empty `final_answer`: the
/// object of an `answer` fact, else of the latest positive fact.
pub fn fallback_answer(facts: &[Assertion]) -> Option<String> {
    let candidates = facts
        .iter()
        .filter(|a| a.polarity == Polarity::Positive && !is_bookkeeping(a));
    let mut best: Option<&Assertion> = None;
    for a in candidates {
        let is_answer = normalize_term(&a.predicate) == ANSWER_PREDICATE;
        best = match best {
            None => Some(a),
            Some(b) => {
                let b_answer = normalize_term(&b.predicate) == ANSWER_PREDICATE;
                if (is_answer, a.born_at, &a.id) > (b_answer, b.born_at, &b.id) {
                    Some(a)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.map(|a| a.object.clone())
}

/// Combines the decomposer, retriever and verifier sets into an answer.
///
/// Inconsistent inputs are escalated without consulting the backend. An
/// empty answer from the backend falls back to [`fallback_answer`].
pub fn assemble(
    backend: &dyn Backend,
    question: &str,
    phi_q: &[Assertion],
    phi_r: &[Assertion],
    phi_v: &[Assertion],
    reg: &PredicateRegistry,
    temperature: f64,
) -> Result<Invocation<AssemblerOutput>, AgentError> {
    let all: Vec<Assertion> = phi_q.iter().chain(phi_r).chain(phi_v).cloned().collect();
    if let Ok(psi) = minimal_conflict_set(&all, reg, 0) {
        let members: Vec<&Assertion> = all.iter().filter(|a| psi.members.contains(&a.id)).collect();
        return Ok(Invocation {
            output: AssemblerOutput {
                final_answer: String::new(),
                partial_answer_synthesis: Vec::new(),
                escalation_signal: format!("inconsistent partial answers: {}", describe_conflict(&members)),
            },
            calls: 0,
        });
    }
    let mut input = format!("Question: {question}\nFacts:\n");
    for a in phi_v.iter().filter(|a| !is_bookkeeping(a)) {
        input.push_str(&a.to_string());
        input.push('\n');
    }
    let mut inv = invoke::<AssemblerOutput>(backend, question, &input, temperature)?;
    if inv.output.final_answer.trim().is_empty() && !inv.output.escalated() {
        if let Some(ans) = fallback_answer(phi_v) {
            inv.output
                .partial_answer_synthesis
                .push(format!("answer taken from the latest verified fact: {ans}"));
            inv.output.final_answer = ans;
        }
    }
    Ok(inv)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SupervisorError {
    #[error("no global checkpoint precedes assertion `{0}`")]
    NoCheckpointAvailable(String),
    #[error("every member of the conflict is protected")]
    OnlyProtected,
    #[error(transparent)]
    Journal(#[from] JournalError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisorOutcome {
    pub output: SupervisorOutput,
    pub rollback: Option<RollbackOutcome>,
    /// The member the rollback was aimed at.
    pub victim: Option<Assertion>,
}

/// The member of `members` to give up: retraction order over the
/// unprotected ones.
pub fn choose_victim<'a>(members: &[&'a Assertion]) -> Option<&'a Assertion> {
    retraction_candidate(members.iter().copied().filter(|a| !a.protected))
}

/// Handles an escalated conflict by rolling every agent back to the latest
/// global checkpoint taken before the victim was born.
pub fn supervise(
    timeline: &mut Timeline,
    supervisor: &AgentId,
    report: Option<&ConflictReport>,
) -> Result<SupervisorOutcome, SupervisorError> {
    let Some(report) = report else {
        return Ok(SupervisorOutcome {
            output: SupervisorOutput {
                conflict_summary: Vec::new(),
                global_backtracking_decision: "none".to_string(),
                updated_consensus_state: Vec::new(),
                reasoning_notes: "no conflict escalated".to_string(),
            },
            rollback: None,
            victim: None,
        });
    };
    let global = timeline.global_set();
    let members: Vec<&Assertion> = report.members.iter().filter_map(|id| global.get(id)).collect();
    let victim = choose_victim(&members).ok_or(SupervisorError::OnlyProtected)?.clone();
    let checkpoint = timeline
        .checkpoints_for(&Scope::Global)
        .filter(|c| c.time < victim.born_at)
        .last()
        .cloned()
        .ok_or_else(|| SupervisorError::NoCheckpointAvailable(victim.id.clone()))?;
    let summary = describe_conflict(&members);
    let rollback = timeline.backtrack_global(supervisor, &checkpoint.id)?;
    let kept: Vec<String> = members
        .iter()
        .filter(|a| timeline.is_live(&a.id))
        .map(|a| a.to_string())
        .collect();
    Ok(SupervisorOutcome {
        output: SupervisorOutput {
            conflict_summary: alloc::vec![summary],
            global_backtracking_decision: format!(
                "rollback to {} (t={})",
                checkpoint.id, checkpoint.time
            ),
            updated_consensus_state: kept,
            reasoning_notes: format!(
                "{} ({}, confidence {}) was born at t={}; restored the last shared state before it and discarded {} assertions",
                victim.id,
                victim,
                victim.confidence,
                victim.born_at,
                rollback.retracted.len()
            ),
        },
        rollback: Some(rollback),
        victim: Some(victim),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlContext {
    pub report: ConflictReport,
    /// How often this conflict (by content) has been seen in the run.
    pub recurrences: u32,
    /// The supervisor had no checkpoint to roll back to.
    pub no_checkpoint: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutcome {
    pub output: ControllerOutput,
    pub retracted: Option<Assertion>,
}

/// Meta-level intervention. Conflicts with a protected member are settled
/// by override; recurring conflicts, or ones the supervisor could not roll
/// back, by challenging the weakest member.
pub fn control(
    timeline: &mut Timeline,
    controller: &AgentId,
    ctx: &ControlContext,
) -> Result<ControlOutcome, JournalError> {
    let global = timeline.global_set();
    let members: Vec<&Assertion> = ctx.report.members.iter().filter_map(|id| global.get(id)).collect();
    let none = |why: &str| ControlOutcome {
        output: ControllerOutput {
            intervention_type: InterventionType::None,
            target_of_intervention: String::new(),
            rationale: why.to_string(),
            meta_notes: format!("recurrences: {}", ctx.recurrences),
        },
        retracted: None,
    };
    if members.len() < 2 {
        return Ok(none("conflict is no longer live"));
    }
    let summary = describe_conflict(&members);
    if members.iter().any(|a| a.protected) {
        let target = retraction_candidate(members.iter().copied()).expect("non-empty").clone();
        let rationale = format!("{summary}; a protected statement is involved, forcing out {}", target.id);
        let retracted = timeline.override_assertion(controller, &target.id, &rationale)?;
        return Ok(ControlOutcome {
            output: ControllerOutput {
                intervention_type: InterventionType::Override,
                target_of_intervention: target.id.clone(),
                rationale,
                meta_notes: format!("recurrences: {}", ctx.recurrences),
            },
            retracted: Some(retracted),
        });
    }
    if ctx.recurrences >= 2 || ctx.no_checkpoint {
        let target = choose_victim(&members).expect("unprotected members").clone();
        let why = if ctx.no_checkpoint {
            "no checkpoint to roll back to"
        } else {
            "conflict recurred after rollback"
        };
        let rationale = format!("{summary}; {why}; challenging {} ({target})", target.id);
        let retracted = timeline.challenge(controller, &target.id, &rationale)?;
        return Ok(ControlOutcome {
            output: ControllerOutput {
                intervention_type: InterventionType::Challenge,
                target_of_intervention: target.id.clone(),
                rationale,
                meta_notes: format!("recurrences: {}", ctx.recurrences),
            },
            retracted: Some(retracted),
        });
    }
    Ok(none("no recurrence"))
}
