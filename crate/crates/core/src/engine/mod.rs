//! The round loop: decompose, gather evidence per sub-question, verify with
//! local backtracking, escalate cross-thread conflicts, assemble.

pub mod config;
pub mod executor;
pub mod puzzle;
pub mod scenario;

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    self, assemble, control, decompose, extract_facts, retrieve_scripted, supervise,
    AgentError, AgentRole, AssemblerOutput, Backend, ControlContext, ControllerOutput,
    FactDraft, SupervisorError, SupervisorOutput, VerifierOutput,
};
use crate::bus::{Bus, Message};
use crate::journal::{
    EntryKind, JournalEntry, JournalError, Outcome, TemporalConstraint, TemporalViolation,
    Timeline,
};
use crate::kstore::{AgentId, Assertion, ConflictReport, Pattern, PredicateRegistry, Scope, TripleKey};
use crate::retrieval::{EvidenceItem, Index};

pub use config::{BackendConfig, ConfigError, EngineConfig, Temperatures};
pub use executor::{Executor, Sequential};
pub use puzzle::{run_puzzle, HypothesisTrace, PuzzleResult, PuzzleTrace};
pub use scenario::{Scenario, ScenarioError};

/// The answer string of a run that could not settle its conflicts.
pub const DISCLAIMED: &str = "DISCLAIMED";

static SEQUENTIAL: Sequential = Sequential;

pub enum EvidenceSource<'a> {
    /// Hybrid retrieval over an ingested corpus.
    Index(&'a Index),
    /// Retriever replies come from the backend, keyed by sub-question.
    Scripted,
}

pub struct RunContext<'a> {
    pub backend: &'a dyn Backend,
    pub evidence: EvidenceSource<'a>,
    pub registry: PredicateRegistry,
    /// Protected assertions admitted before decomposition.
    pub axioms: Vec<Assertion>,
    pub eventually: Vec<Pattern>,
    pub executor: &'a dyn Executor,
}

impl<'a> RunContext<'a> {
    pub fn new(backend: &'a dyn Backend, evidence: EvidenceSource<'a>) -> Self {
        RunContext {
            backend,
            evidence,
            registry: PredicateRegistry::new(),
            axioms: Vec::new(),
            eventually: Vec::new(),
            executor: &SEQUENTIAL,
        }
    }

    pub fn with_registry(mut self, registry: PredicateRegistry) -> Self {
        self.registry = registry;
        self
    }

    pub fn with_executor(mut self, executor: &'a dyn Executor) -> Self {
        self.executor = executor;
        self
    }

    /// Context for a scripted scenario: registry, axioms and eventualities
    /// come from the scenario.
    pub fn for_scenario(
        backend: &'a dyn Backend,
        scenario: &Scenario,
    ) -> Result<Self, ScenarioError> {
        let mut ctx = RunContext::new(backend, EvidenceSource::Scripted).with_registry(scenario.registry()?);
        ctx.axioms = scenario.axiom_assertions()?;
        ctx.eventually = scenario.eventually_patterns()?;
        Ok(ctx)
    }
}

/// A fact line parsed from one evidence passage.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcedFact {
    pub draft: FactDraft,
    pub source: String,
    pub evidence_confidence: Option<f64>,
}

/// Everything gathered for one sub-question before it is committed.
#[derive(Debug, Clone, PartialEq)]
pub struct Gathered {
    pub evidence: Vec<EvidenceItem>,
    pub facts: Vec<SourcedFact>,
    /// `(source, line)` pairs that were not fact lines.
    pub informs: Vec<(String, String)>,
    pub extractions: Vec<VerifierOutput>,
    pub calls: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatherError {
    pub calls: u32,
    pub error: AgentError,
}

pub type GatherResult = Result<Gathered, GatherError>;

/// Retrieval plus per-passage fact extraction for one sub-question. Pure
/// with respect to run state, so it may run on any worker.
pub fn gather(
    ctx: &RunContext<'_>,
    cfg: &EngineConfig,
    sub_question: &str,
    invalidated: &BTreeSet<String>,
) -> GatherResult {
    let mut calls = 0;
    let fail = |calls, error| GatherError { calls, error };
    let evidence: Vec<EvidenceItem> = match ctx.evidence {
        EvidenceSource::Index(index) => index
            .retrieve_excluding(sub_question, cfg.retrieve_params(), invalidated)
            .map_err(|e| {
                fail(
                    0,
                    AgentError::BackendFailure {
                        role: AgentRole::Retriever,
                        reason: e.to_string(),
                    },
                )
            })?
            .items,
        EvidenceSource::Scripted => {
            let inv = retrieve_scripted(
                ctx.backend,
                sub_question,
                cfg.temperatures.retriever,
            )
            .map_err(|e| fail(calls + 1, e))?;
            calls += inv.calls;
            inv.output
                .retrieved_evidence
                .into_iter()
                .filter(|e| !invalidated.contains(&e.source))
                .take(cfg.top_m)
                .collect()
        }
    };
    let mut facts = Vec::new();
    let mut informs = Vec::new();
    let mut extractions = Vec::new();
    for item in &evidence {
        let inv = extract_facts(ctx.backend, sub_question, item, cfg.temperatures.verifier)
            .map_err(|e| fail(calls + 1, e))?;
        calls += inv.calls;
        for line in &inv.output.verified_facts {
            match agents::parse_fact_line(line) {
                Ok(draft) => facts.push(SourcedFact {
                    draft,
                    source: item.source.clone(),
                    evidence_confidence: item.confidence,
                }),
                Err(_) => informs.push((item.source.clone(), line.clone())),
            }
        }
        extractions.push(inv.output);
    }
    Ok(Gathered {
        evidence,
        facts,
        informs,
        extractions,
        calls,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub local_backtracks: usize,
    pub global_rollbacks: usize,
    pub challenges: usize,
    pub overrides: usize,
    pub backend_calls: u64,
}

impl Counters {
    /// Everything except `backend_calls`, counted from the journal.
    pub fn from_journal(entries: &[JournalEntry]) -> Self {
        let mut c = Counters::default();
        for e in entries {
            match &e.event {
                crate::journal::Event::Rollback { scope: Scope::Global, .. } => c.global_rollbacks += 1,
                crate::journal::Event::Rollback { .. } => c.local_backtracks += 1,
                crate::journal::Event::Challenge { .. } => c.challenges += 1,
                crate::journal::Event::Override { .. } => c.overrides += 1,
                _ => {}
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptTrace {
    pub round: usize,
    pub evidence: Vec<String>,
    pub invalidated: Vec<String>,
    pub admitted: Vec<String>,
    pub discarded: Vec<String>,
    pub informs: Vec<String>,
    pub verifier: VerifierOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubQuestionTrace {
    pub label: String,
    pub text: String,
    pub attempts: Vec<AttemptTrace>,
    /// Retrieval came back empty on the last attempt.
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscalationRecord {
    pub round: usize,
    pub members: Vec<String>,
    pub conflict: String,
    pub recurrence: u32,
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supervisor: Option<SupervisorOutput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerOutput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub question: String,
    pub answer: String,
    pub outcome: Outcome,
    pub rounds: usize,
    pub counters: Counters,
    pub sub_questions: Vec<SubQuestionTrace>,
    pub escalations: Vec<EscalationRecord>,
    /// Fact lines handed to the assembler.
    pub assembler_inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assembler: Option<AssemblerOutput>,
    pub temporal_violations: Vec<TemporalViolation>,
    pub temporal_warnings: Vec<TemporalViolation>,
    pub notes: Vec<String>,
    pub journal: Vec<JournalEntry>,
}

impl RunTrace {
    /// Whether the counters agree with the journal.
    pub fn counters_match_journal(&self) -> bool {
        let j = Counters::from_journal(&self.journal);
        Counters {
            backend_calls: self.counters.backend_calls,
            ..j
        } == self.counters
    }

    pub fn count(&self, kind: EntryKind) -> usize {
        self.journal.iter().filter(|e| e.kind() == kind).count()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("no hypothesis is consistent")]
    NoConsistentHypothesis,
}

/// A run that stopped on an error. The trace covers everything up to it.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: EngineError,
    pub trace: Option<Box<RunTrace>>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub answer: String,
    pub trace: RunTrace,
    pub timeline: Timeline,
}

impl RunResult {
    pub fn outcome(&self) -> Outcome {
        self.trace.outcome
    }
}

/// How an escalated conflict was handled.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolution {
    GlobalRollback { checkpoint: String, retracted: usize },
    Challenge { target: String },
    Override { target: String },
    Disclaim { reason: String },
}

#[derive(Debug, Clone)]
struct SubQuestion {
    label: String,
    text: String,
    pending: bool,
    invalidated: BTreeSet<String>,
    trace: SubQuestionTrace,
}

#[derive(Debug, Clone)]
struct Provenance {
    sub_question: usize,
    source: String,
}

/// State of one run. One instance per question.
pub struct RunState<'a> {
    ctx: &'a RunContext<'a>,
    cfg: EngineConfig,
    question: String,
    timeline: Timeline,
    bus: Bus,
    subqs: Vec<SubQuestion>,
    provenance: BTreeMap<String, Provenance>,
    recurrences: BTreeMap<Vec<TripleKey>, u32>,
    next_id: BTreeMap<&'static str, u64>,
    round: usize,
    backend_calls: u64,
    escalations: Vec<EscalationRecord>,
    violations: Vec<TemporalViolation>,
    notes: Vec<String>,
    assembler_inputs: Vec<String>,
    assembler: Option<AssemblerOutput>,
}

fn role(r: AgentRole) -> AgentId {
    r.agent_id()
}

impl<'a> RunState<'a> {
    pub fn new(question: &str, cfg: &EngineConfig, ctx: &'a RunContext<'a>) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let mut timeline = Timeline::new(ctx.registry.clone()).with_local_depth(cfg.local_bt_depth);
        let mut bus = Bus::new();
        for r in AgentRole::ALL {
            timeline.register_agent(&r.agent_id());
            bus.register(&r.agent_id());
        }
        Ok(RunState {
            ctx,
            cfg: cfg.clone(),
            question: question.to_string(),
            timeline,
            bus,
            subqs: Vec::new(),
            provenance: BTreeMap::new(),
            recurrences: BTreeMap::new(),
            next_id: BTreeMap::new(),
            round: 0,
            backend_calls: 0,
            escalations: Vec::new(),
            violations: Vec::new(),
            notes: Vec::new(),
            assembler_inputs: Vec::new(),
            assembler: None,
        })
    }

    fn fresh(&mut self, prefix: &'static str) -> String {
        let n = self.next_id.entry(prefix).or_insert(0);
        *n += 1;
        format!("{prefix}-{:04}", *n)
    }

    pub fn timeline(&self) -> &Timeline {
        &self.timeline
    }

    fn send_assert(&mut self, sender: AgentRole, a: &Assertion) {
        let id = self.fresh("m");
        self.bus
            .send(Message::assert(id, sender.agent_id(), a.clone()))
            .expect("roles are registered and message ids are fresh");
    }

    fn send_inform(&mut self, sender: AgentRole, body: serde_json::Value) {
        let id = self.fresh("m");
        self.bus
            .send(Message::inform(id, sender.agent_id(), body))
            .expect("roles are registered and message ids are fresh");
    }

    fn check_temporal(&mut self) -> Result<(), JournalError> {
        let now = self.timeline.now();
        let found = self.timeline.check_temporal(now)?;
        self.violations.extend(found);
        Ok(())
    }

    fn setup(&mut self) -> Result<(), EngineError> {
        let sup = role(AgentRole::Supervisor);
        for ax in self.ctx.axioms.clone() {
            let a = self.timeline.assert_statement(&sup, ax.with_source(sup.as_str()))?;
            let now = self.timeline.now();
            self.timeline.register_temporal(TemporalConstraint::always(a.pattern(), now));
        }
        for p in self.ctx.eventually.clone() {
            self.timeline.register_temporal(TemporalConstraint::eventually(p, 0));
        }
        for r in AgentRole::ALL {
            self.timeline.take_checkpoint(Scope::Agent(r.agent_id()));
        }
        Ok(())
    }

    fn decompose(&mut self) -> Result<(), EngineError> {
        let inv = decompose(
            self.ctx.backend,
            &self.question,
            self.cfg.max_subquestions,
            self.cfg.temperatures.decomposer,
        );
        let inv = match inv {
            Ok(inv) => inv,
            Err(e) => {
                self.backend_calls += 1;
                return Err(e.into());
            }
        };
        self.backend_calls += inv.calls as u64;
        let dq = role(AgentRole::Decomposer);
        for (i, text) in inv.output.sub_questions.iter().enumerate() {
            let label = format!("q{}", i + 1);
            let id = self.fresh("sq");
            let rec = Assertion::new(id, &label, agents::SUBQUESTION_PREDICATE, text)
                .with_source(dq.as_str());
            let rec = self.timeline.assert_statement(&dq, rec)?;
            self.send_assert(AgentRole::Decomposer, &rec);
            self.subqs.push(SubQuestion {
                label: label.clone(),
                text: text.clone(),
                pending: true,
                invalidated: BTreeSet::new(),
                trace: SubQuestionTrace {
                    label,
                    text: text.clone(),
                    attempts: Vec::new(),
                    failed: false,
                },
            });
        }
        if !inv.output.decomposition_reasoning.is_empty() {
            self.notes.push(format!("decomposition: {}", inv.output.decomposition_reasoning));
        }
        self.bus.deliver_round(&mut self.timeline);
        self.timeline.take_checkpoint(Scope::Global);
        Ok(())
    }

    fn commit(&mut self, i: usize, g: Gathered) -> Result<(), EngineError> {
        let ret = role(AgentRole::Retriever);
        let ver = role(AgentRole::Verifier);
        let label = self.subqs[i].label.clone();
        self.backend_calls += g.calls as u64;

        for item in &g.evidence {
            let id = self.fresh("ev");
            let rec = Assertion::new(id, &item.source, agents::EVIDENCE_PREDICATE, &label)
                .with_confidence(item.confidence.unwrap_or(1.0))
                .with_source(ret.as_str());
            if self.timeline.global_set().entails(&rec) {
                continue;
            }
            let rec = self.timeline.assert_statement(&ret, rec)?;
            self.provenance.insert(
                rec.id.clone(),
                Provenance {
                    sub_question: i,
                    source: item.source.clone(),
                },
            );
            self.send_assert(AgentRole::Retriever, &rec);
        }
        for (source, line) in &g.informs {
            self.send_inform(
                AgentRole::Verifier,
                serde_json::json!({"sub_question": label, "source": source, "text": line}),
            );
        }

        let mut batch = Vec::with_capacity(g.facts.len());
        let mut batch_sources = BTreeMap::new();
        for f in g.facts {
            let id = self.fresh("f");
            let conf = f.evidence_confidence.unwrap_or(1.0);
            let a = f.draft.into_assertion(id.clone(), conf).with_source(ver.as_str());
            batch_sources.insert(id, f.source);
            batch.push(a);
        }
        let mut next = self.next_id.get("f").copied().unwrap_or(0);
        let mut fresh = || {
            next += 1;
            format!("f-{next:04}")
        };
        let out = agents::verify(&mut self.timeline, &ver, batch, &mut fresh)?;
        self.next_id.insert("f", next);

        for (old, new) in &out.renamed {
            if let Some(src) = batch_sources.get(old).cloned() {
                batch_sources.insert(new.clone(), src);
            }
        }
        for a in &out.admitted {
            if let Some(src) = batch_sources.get(&a.id) {
                self.provenance.insert(
                    a.id.clone(),
                    Provenance {
                        sub_question: i,
                        source: src.clone(),
                    },
                );
            }
            self.send_assert(AgentRole::Verifier, a);
        }

        let sq = &mut self.subqs[i];
        sq.pending = false;
        sq.trace.failed = g.evidence.is_empty();
        sq.trace.attempts.push(AttemptTrace {
            round: self.round,
            evidence: g.evidence.iter().map(|e| e.source.clone()).collect(),
            invalidated: sq.invalidated.iter().cloned().collect(),
            admitted: out.admitted.iter().map(|a| a.to_string()).collect(),
            discarded: out.discarded.iter().map(|a| a.to_string()).collect(),
            informs: g.informs.iter().map(|(_, l)| l.clone()).collect(),
            verifier: out.output,
        });

        if self.timeline.global_set().is_consistent(self.timeline.registry()) {
            self.timeline.take_checkpoint(Scope::Global);
        }
        self.check_temporal()?;
        Ok(())
    }

    fn mark_pending_for(&mut self, retracted: &[Assertion], invalidate: bool) {
        for a in retracted {
            if let Some(p) = self.provenance.get(&a.id).cloned() {
                let sq = &mut self.subqs[p.sub_question];
                sq.pending = true;
                if invalidate {
                    sq.invalidated.insert(p.source);
                }
            }
        }
    }

    /// Settles one escalated conflict.
    ///
    /// Conflicts with a protected member go to the controller as an
    /// override. Otherwise the first occurrence of a conflict (and every odd
    /// one after it) gets a supervisor rollback while the budget lasts, and
    /// even recurrences get a controller challenge.
    pub fn escalate(&mut self, report: ConflictReport) -> Result<Resolution, EngineError> {
        let global = self.timeline.global_set();
        let members: Vec<Assertion> = report
            .members
            .iter()
            .filter_map(|id| global.get(id).cloned())
            .collect();
        let mut key: Vec<TripleKey> = members.iter().map(Assertion::key).collect();
        key.sort();
        let c = {
            let n = self.recurrences.entry(key).or_insert(0);
            *n += 1;
            *n
        };
        let member_refs: Vec<&Assertion> = members.iter().collect();
        let mut record = EscalationRecord {
            round: self.round,
            members: report.members.clone(),
            conflict: agents::describe_conflict(&member_refs),
            recurrence: c,
            action: String::new(),
            supervisor: None,
            controller: None,
        };
        let has_protected = members.iter().any(|a| a.protected);

        let resolution = if has_protected || c % 2 == 0 {
            self.controller(&report, c, false, &mut record)?
        } else if Counters::from_journal(self.timeline.entries()).global_rollbacks
            >= self.cfg.max_global_rollbacks
        {
            Resolution::Disclaim {
                reason: format!(
                    "global rollback budget ({}) exhausted",
                    self.cfg.max_global_rollbacks
                ),
            }
        } else {
            match supervise(&mut self.timeline, &role(AgentRole::Supervisor), Some(&report)) {
                Ok(out) => {
                    let rb = out.rollback.expect("supervise with a report rolls back");
                    self.mark_pending_for(&rb.retracted, false);
                    if let Some(v) = &out.victim {
                        self.mark_pending_for(core::slice::from_ref(v), true);
                    }
                    record.supervisor = Some(out.output);
                    Resolution::GlobalRollback {
                        checkpoint: rb.checkpoint,
                        retracted: rb.retracted.len(),
                    }
                }
                Err(SupervisorError::NoCheckpointAvailable(_)) => {
                    self.controller(&report, c, true, &mut record)?
                }
                Err(SupervisorError::OnlyProtected) => unreachable!("protected conflicts go to the controller"),
                Err(SupervisorError::Journal(e)) => return Err(e.into()),
            }
        };
        record.action = match &resolution {
            Resolution::GlobalRollback { .. } => "global-rollback",
            Resolution::Challenge { .. } => "challenge",
            Resolution::Override { .. } => "override",
            Resolution::Disclaim { .. } => "disclaim",
        }
        .to_string();
        self.escalations.push(record);
        Ok(resolution)
    }

    fn controller(
        &mut self,
        report: &ConflictReport,
        recurrences: u32,
        no_checkpoint: bool,
        record: &mut EscalationRecord,
    ) -> Result<Resolution, EngineError> {
        let ctx = ControlContext {
            report: report.clone(),
            recurrences: recurrences.max(if no_checkpoint { 1 } else { 2 }),
            no_checkpoint,
        };
        let out = control(&mut self.timeline, &role(AgentRole::Controller), &ctx)?;
        let kind = out.output.intervention_type;
        let target = out.output.target_of_intervention.clone();
        record.controller = Some(out.output);
        if let Some(r) = &out.retracted {
            self.mark_pending_for(core::slice::from_ref(r), true);
        }
        Ok(match kind {
            agents::InterventionType::Challenge => Resolution::Challenge { target },
            agents::InterventionType::Override => Resolution::Override { target },
            _ => Resolution::Disclaim {
                reason: "controller could not intervene".to_string(),
            },
        })
    }

    fn settle_conflicts(&mut self) -> Result<Option<String>, EngineError> {
        loop {
            let global = self.timeline.global_set();
            let Ok(report) = global.minimal_conflict_set(self.timeline.registry()) else {
                return Ok(None);
            };
            if let Resolution::Disclaim { reason } = self.escalate(report)? {
                return Ok(Some(reason));
            }
            self.check_temporal()?;
        }
    }

    fn assemble(&mut self) -> Result<Option<String>, EngineError> {
        let set = |r: AgentRole| {
            self.timeline
                .knowledge_set(&r.agent_id())
                .map(|s| s.to_vec())
                .unwrap_or_default()
        };
        let (phi_q, phi_r, phi_v) = (
            set(AgentRole::Decomposer),
            set(AgentRole::Retriever),
            set(AgentRole::Verifier),
        );
        self.assembler_inputs = phi_v.iter().map(|a| a.to_string()).collect();
        let inv = assemble(
            self.ctx.backend,
            &self.question,
            &phi_q,
            &phi_r,
            &phi_v,
            self.timeline.registry(),
            self.cfg.temperatures.assembler,
        );
        let inv = match inv {
            Ok(inv) => inv,
            Err(e) => {
                self.backend_calls += 1;
                return Err(e.into());
            }
        };
        self.backend_calls += inv.calls as u64;
        let answer = inv.output.final_answer.trim().to_string();
        let escalated = inv.output.escalated();
        if escalated {
            self.notes.push(format!("assembler escalated: {}", inv.output.escalation_signal));
        }
        self.assembler = Some(inv.output);
        Ok((!answer.is_empty()).then_some(answer))
    }

    fn finish(mut self, outcome: Outcome, answer: String) -> RunResult {
        self.timeline
            .record_final_answer(&role(AgentRole::Assembler), &answer, outcome);
        self.into_result(outcome, answer)
    }

    fn into_result(self, outcome: Outcome, answer: String) -> RunResult {
        let warnings = self.timeline.temporal_warnings();
        let journal = self.timeline.entries().to_vec();
        let counters = Counters {
            backend_calls: self.backend_calls,
            ..Counters::from_journal(&journal)
        };
        let trace = RunTrace {
            question: self.question,
            answer: answer.clone(),
            outcome,
            rounds: self.round,
            counters,
            sub_questions: self.subqs.into_iter().map(|s| s.trace).collect(),
            escalations: self.escalations,
            assembler_inputs: self.assembler_inputs,
            assembler: self.assembler,
            temporal_violations: self.violations,
            temporal_warnings: warnings,
            notes: self.notes,
            journal,
        };
        RunResult {
            answer,
            trace,
            timeline: self.timeline,
        }
    }

    fn disclaim(mut self, reason: String) -> RunResult {
        self.notes.push(format!("disclaimed: {reason}"));
        self.finish(Outcome::Disclaimed, DISCLAIMED.to_string())
    }

    fn failure(mut self, error: EngineError) -> RunFailure {
        self.notes.push(format!("failed: {error}"));
        let result = self.into_result(Outcome::Disclaimed, DISCLAIMED.to_string());
        RunFailure {
            error,
            trace: Some(Box::new(result.trace)),
        }
    }

    /// Runs to completion.
    pub fn run(mut self) -> Result<RunResult, RunFailure> {
        if let Err(e) = self.setup().and_then(|_| self.decompose()) {
            return Err(self.failure(e));
        }
        loop {
            if self.round >= self.cfg.max_rounds {
                let reason = format!("round budget ({}) exhausted", self.cfg.max_rounds);
                return Ok(self.disclaim(reason));
            }
            self.round += 1;

            let pending: Vec<usize> = (0..self.subqs.len()).filter(|&i| self.subqs[i].pending).collect();
            if !pending.is_empty() {
                let jobs: Vec<(String, BTreeSet<String>)> = pending
                    .iter()
                    .map(|&i| (self.subqs[i].text.clone(), self.subqs[i].invalidated.clone()))
                    .collect();
                let ctx = self.ctx;
                let cfg = &self.cfg;
                let results = ctx
                    .executor
                    .map(jobs.len(), &|k| gather(ctx, cfg, &jobs[k].0, &jobs[k].1));
                for (&i, r) in pending.iter().zip(results) {
                    match r {
                        Ok(g) => {
                            if let Err(e) = self.commit(i, g) {
                                return Err(self.failure(e));
                            }
                        }
                        Err(GatherError { calls, error }) => {
                            self.backend_calls += calls as u64;
                            return Err(self.failure(error.into()));
                        }
                    }
                }
            }
            self.bus.deliver_round(&mut self.timeline);
            if let Err(e) = self.check_temporal() {
                return Err(self.failure(e.into()));
            }

            match self.settle_conflicts() {
                Ok(Some(reason)) => return Ok(self.disclaim(reason)),
                Ok(None) => {}
                Err(e) => return Err(self.failure(e)),
            }
            if self.subqs.iter().any(|s| s.pending) {
                continue;
            }
            return match self.assemble() {
                Ok(Some(answer)) => Ok(self.finish(Outcome::Answered, answer)),
                Ok(None) => Ok(self.disclaim("assembler produced no answer".to_string())),
                Err(e) => Err(self.failure(e)),
            };
        }
    }
}

/// Answers `question`, or returns [`DISCLAIMED`] when its conflicts cannot be
/// settled within the configured budgets.
pub fn run_question(
    question: &str,
    cfg: &EngineConfig,
    ctx: &RunContext<'_>,
) -> Result<RunResult, RunFailure> {
    let state = RunState::new(question, cfg, ctx).map_err(|e| RunFailure {
        error: e.into(),
        trace: None,
    })?;
    state.run()
}

/// Runs a scripted scenario with its own registry, axioms and overrides.
pub fn run_scenario(
    scenario: &Scenario,
    base: &EngineConfig,
    backend: &dyn Backend,
    executor: &dyn Executor,
) -> Result<RunResult, RunFailure> {
    let prep = || -> Result<(EngineConfig, RunContext<'_>), ScenarioError> {
        let cfg = scenario.effective_config(base)?;
        let ctx = RunContext::for_scenario(backend, scenario)?.with_executor(executor);
        Ok((cfg, ctx))
    };
    let (cfg, ctx) = prep().map_err(|e| RunFailure {
        error: EngineError::Config(ConfigError(e.to_string())),
        trace: None,
    })?;
    run_question(&scenario.question, &cfg, &ctx)
}
