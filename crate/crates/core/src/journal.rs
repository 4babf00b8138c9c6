//! Append-only event log with checkpoints, rollback and deterministic replay.
//!
//! [`Timeline`] owns the per-agent knowledge sets and is the only place where
//! they change. Every change is committed to the [`Journal`] first-class, so
//! [`replay`] can rebuild the exact same state from the log alone. Rollbacks
//! never erase history: they append `retract` entries for everything they
//! remove, followed by a single `rollback` entry listing any reinstatements.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::CompositeEvent;
use crate::kstore::{
    AgentId, Assertion, KStoreError, KnowledgeSet, LogicalTime, Pattern, PredicateRegistry, Scope,
};

/// Default local backtrack budget, counted in checkpoints.
pub const DEFAULT_LOCAL_DEPTH: usize = 3;
/// Largest accepted local backtrack budget.
pub const MAX_LOCAL_DEPTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetractReason {
    LocalBacktrack,
    GlobalRollback,
    Challenge,
    Override,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Answered,
    Disclaimed,
}

/// A restorable state marker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub id: String,
    pub scope: Scope,
    pub time: LogicalTime,
    pub live_snapshot: BTreeMap<AgentId, BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reinstatement {
    pub agent: AgentId,
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "kebab-case")]
pub enum Event {
    Assert {
        assertion: Assertion,
    },
    Retract {
        id: String,
        reason: RetractReason,
    },
    Message {
        event: CompositeEvent,
    },
    Checkpoint {
        checkpoint: Checkpoint,
    },
    Rollback {
        scope: Scope,
        checkpoint: String,
        retracted: Vec<String>,
        reinstated: Vec<Reinstatement>,
    },
    Challenge {
        target: String,
        rationale: String,
    },
    Override {
        target: String,
        rationale: String,
    },
    FinalAnswer {
        answer: String,
        outcome: Outcome,
    },
}

impl Event {
    pub fn kind(&self) -> EntryKind {
        match self {
            Event::Assert { .. } => EntryKind::Assert,
            Event::Retract { .. } => EntryKind::Retract,
            Event::Message { .. } => EntryKind::Message,
            Event::Checkpoint { .. } => EntryKind::Checkpoint,
            Event::Rollback { .. } => EntryKind::Rollback,
            Event::Challenge { .. } => EntryKind::Challenge,
            Event::Override { .. } => EntryKind::Override,
            Event::FinalAnswer { .. } => EntryKind::FinalAnswer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryKind {
    Assert,
    Retract,
    Message,
    Checkpoint,
    Rollback,
    Challenge,
    Override,
    FinalAnswer,
}

impl EntryKind {
    pub const ALL: [EntryKind; 8] = [
        EntryKind::Assert,
        EntryKind::Retract,
        EntryKind::Message,
        EntryKind::Checkpoint,
        EntryKind::Rollback,
        EntryKind::Challenge,
        EntryKind::Override,
        EntryKind::FinalAnswer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntryKind::Assert => "assert",
            EntryKind::Retract => "retract",
            EntryKind::Message => "message",
            EntryKind::Checkpoint => "checkpoint",
            EntryKind::Rollback => "rollback",
            EntryKind::Challenge => "challenge",
            EntryKind::Override => "override",
            EntryKind::FinalAnswer => "final-answer",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// One line of the persistent log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub seq: u64,
    pub time: LogicalTime,
    pub actor: AgentId,
    #[serde(flatten)]
    pub event: Event,
}

impl JournalEntry {
    pub fn kind(&self) -> EntryKind {
        self.event.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JournalError {
    #[error("time regression: last entry at t={last}, new entry at t={got}")]
    TimeRegression { last: LogicalTime, got: LogicalTime },
    #[error("checkpoint `{checkpoint}` is {depth} checkpoints back; local depth limit is {limit}")]
    DepthExceeded {
        checkpoint: String,
        depth: usize,
        limit: usize,
    },
    #[error("checkpoint `{checkpoint}` has scope {actual}, expected {expected}")]
    ScopeMismatch {
        checkpoint: String,
        expected: String,
        actual: String,
    },
    #[error("unknown checkpoint `{0}`")]
    UnknownCheckpoint(String),
    #[error("assertion `{0}` is not live")]
    NotLive(String),
    #[error("assertion `{0}` is protected")]
    Protected(String),
    #[error("corrupt log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error(transparent)]
    KStore(#[from] KStoreError),
}

/// The raw append-only log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Journal {
    entries: Vec<JournalEntry>,
}

impl Journal {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an event and returns its sequence number.
    pub fn append(
        &mut self,
        time: LogicalTime,
        actor: AgentId,
        event: Event,
    ) -> Result<u64, JournalError> {
        if let Some(last) = self.entries.last() {
            if time < last.time {
                return Err(JournalError::TimeRegression {
                    last: last.time,
                    got: time,
                });
            }
        }
        let seq = self.entries.len() as u64;
        self.entries.push(JournalEntry {
            seq,
            time,
            actor,
            event,
        });
        Ok(seq)
    }

    pub fn entries(&self) -> &[JournalEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last_time(&self) -> Option<LogicalTime> {
        self.entries.last().map(|e| e.time)
    }

    pub fn count(&self, kind: EntryKind) -> usize {
        self.entries.iter().filter(|e| e.kind() == kind).count()
    }

    pub fn to_ndjson(&self) -> String {
        to_ndjson(&self.entries)
    }
}

/// Serializes entries as newline-delimited JSON, one entry per line.
pub fn to_ndjson(entries: &[JournalEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("journal entry serializes"));
        out.push('\n');
    }
    out
}

/// Parses newline-delimited JSON. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_ndjson(text: &str) -> Result<Vec<JournalEntry>, JournalError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: JournalEntry =
            serde_json::from_str(line).map_err(|e| JournalError::CorruptLog {
                line: i + 1,
                reason: e.to_string(),
            })?;
        entries.push(entry);
    }
    Ok(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalKind {
    /// Must hold at every checked time from creation on.
    Always,
    /// Expected to become true at some later point.
    Eventually,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalConstraint {
    pub kind: TemporalKind,
    pub proposition: Pattern,
    pub created_at: LogicalTime,
    pub satisfied: bool,
}

impl TemporalConstraint {
    pub fn always(proposition: Pattern, created_at: LogicalTime) -> Self {
        TemporalConstraint {
            kind: TemporalKind::Always,
            proposition,
            created_at,
            satisfied: false,
        }
    }

    pub fn eventually(proposition: Pattern, created_at: LogicalTime) -> Self {
        TemporalConstraint {
            kind: TemporalKind::Eventually,
            proposition,
            created_at,
            satisfied: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalViolation {
    pub constraint: usize,
    pub kind: TemporalKind,
    pub proposition: Pattern,
    pub at: LogicalTime,
}

/// Live state reconstructed from a log, or read off a running [`Timeline`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LiveState {
    pub time: LogicalTime,
    /// Non-empty agent sets only, each in ascending id order.
    pub sets: BTreeMap<AgentId, Vec<Assertion>>,
    pub checkpoints: Vec<Checkpoint>,
    pub final_answer: Option<(String, Outcome)>,
}

impl LiveState {
    pub fn ids(&self, agent: &AgentId) -> BTreeSet<String> {
        self.sets
            .get(agent)
            .map(|v| v.iter().map(|a| a.id.clone()).collect())
            .unwrap_or_default()
    }

    pub fn global(&self) -> Vec<&Assertion> {
        let mut all: Vec<&Assertion> = self.sets.values().flatten().collect();
        all.sort_by(|a, b| a.id.cmp(&b.id));
        all
    }
}

/// Rebuilds the live state from a log, validating it along the way.
pub fn replay(entries: &[JournalEntry]) -> Result<LiveState, JournalError> {
    let mut sets: BTreeMap<AgentId, BTreeMap<String, Assertion>> = BTreeMap::new();
    let mut archive: BTreeMap<String, Assertion> = BTreeMap::new();
    let mut checkpoints = Vec::new();
    let mut final_answer = None;
    let mut last: Option<(u64, LogicalTime)> = None;

    for (i, entry) in entries.iter().enumerate() {
        let line = i + 1;
        let corrupt = |reason: String| JournalError::CorruptLog { line, reason };
        if let Some((seq, time)) = last {
            if entry.seq <= seq {
                return Err(corrupt(format!("seq {} after {}", entry.seq, seq)));
            }
            if entry.time < time {
                return Err(corrupt(format!("time {} after {}", entry.time, time)));
            }
        }
        last = Some((entry.seq, entry.time));

        match &entry.event {
            Event::Assert { assertion } => {
                if archive.contains_key(&assertion.id) {
                    return Err(corrupt(format!("assertion `{}` asserted twice", assertion.id)));
                }
                assertion
                    .validate()
                    .map_err(|e| corrupt(e.to_string()))?;
                archive.insert(assertion.id.clone(), assertion.clone());
                sets.entry(entry.actor.clone())
                    .or_default()
                    .insert(assertion.id.clone(), assertion.clone());
            }
            Event::Retract { id, .. } => {
                let removed = sets.get_mut(&entry.actor).and_then(|s| s.remove(id));
                if removed.is_none() {
                    return Err(corrupt(format!(
                        "retract of `{id}` which is not live for {}",
                        entry.actor
                    )));
                }
            }
            Event::Checkpoint { checkpoint } => {
                for (agent, ids) in &checkpoint.live_snapshot {
                    let live: BTreeSet<String> = sets
                        .get(agent)
                        .map(|s| s.keys().cloned().collect())
                        .unwrap_or_default();
                    if &live != ids {
                        return Err(corrupt(format!(
                            "checkpoint `{}` snapshot for {agent} disagrees with the log",
                            checkpoint.id
                        )));
                    }
                }
                checkpoints.push(checkpoint.clone());
            }
            Event::Rollback {
                retracted,
                reinstated,
                ..
            } => {
                for id in retracted {
                    if sets.values().any(|s| s.contains_key(id)) {
                        return Err(corrupt(format!("rollback lists `{id}` as retracted but it is live")));
                    }
                }
                for r in reinstated {
                    let a = archive
                        .get(&r.id)
                        .ok_or_else(|| corrupt(format!("reinstated `{}` was never asserted", r.id)))?;
                    sets.entry(r.agent.clone())
                        .or_default()
                        .insert(r.id.clone(), a.clone());
                }
            }
            Event::FinalAnswer { answer, outcome } => {
                final_answer = Some((answer.clone(), *outcome));
            }
            Event::Message { .. } | Event::Challenge { .. } | Event::Override { .. } => {}
        }
    }

    Ok(LiveState {
        time: last.map(|(_, t)| t).unwrap_or(0),
        sets: sets
            .into_iter()
            .filter(|(_, s)| !s.is_empty())
            .map(|(k, s)| (k, s.into_values().collect()))
            .collect(),
        checkpoints,
        final_answer,
    })
}

/// What a rollback changed.
#[derive(Debug, Clone, PartialEq)]
pub struct RollbackOutcome {
    pub checkpoint: String,
    pub scope: Scope,
    pub retracted: Vec<Assertion>,
    pub reinstated: Vec<Reinstatement>,
}

/// The single writer over all knowledge sets.
#[derive(Debug, Clone)]
pub struct Timeline {
    registry: PredicateRegistry,
    journal: Journal,
    now: LogicalTime,
    sets: BTreeMap<AgentId, KnowledgeSet>,
    archive: BTreeMap<String, Assertion>,
    checkpoints: Vec<Checkpoint>,
    temporal: Vec<TemporalConstraint>,
    local_depth: usize,
    final_answer: Option<(String, Outcome)>,
}

impl Timeline {
    pub fn new(registry: PredicateRegistry) -> Self {
        Timeline {
            registry,
            journal: Journal::new(),
            now: 0,
            sets: BTreeMap::new(),
            archive: BTreeMap::new(),
            checkpoints: Vec::new(),
            temporal: Vec::new(),
            local_depth: DEFAULT_LOCAL_DEPTH,
            final_answer: None,
        }
    }

    /// Sets the local backtrack budget. Zero disables local backtracking.
    pub fn with_local_depth(mut self, depth: usize) -> Self {
        self.local_depth = depth;
        self
    }

    pub fn local_depth(&self) -> usize {
        self.local_depth
    }

    pub fn registry(&self) -> &PredicateRegistry {
        &self.registry
    }

    pub fn journal(&self) -> &Journal {
        &self.journal
    }

    pub fn entries(&self) -> &[JournalEntry] {
        self.journal.entries()
    }

    pub fn now(&self) -> LogicalTime {
        self.now
    }

    /// Advances the logical clock by one tick.
    pub fn tick(&mut self) -> LogicalTime {
        self.now += 1;
        self.now
    }

    /// Makes sure `agent` owns a (possibly empty) knowledge set.
    pub fn register_agent(&mut self, agent: &AgentId) {
        let now = self.now;
        self.sets.entry(agent.clone()).or_insert_with(|| {
            let mut ks = KnowledgeSet::new(Scope::Agent(agent.clone()));
            ks.as_of = now;
            ks
        });
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentId> {
        self.sets.keys()
    }

    pub fn knowledge_set(&self, agent: &AgentId) -> Option<&KnowledgeSet> {
        self.sets.get(agent)
    }

    /// The union of all agent sets at the current time.
    pub fn global_set(&self) -> KnowledgeSet {
        KnowledgeSet::from_assertions(
            Scope::Global,
            self.now,
            self.sets.values().flat_map(|s| s.iter().cloned()),
        )
    }

    /// Looks up any assertion ever committed, live or not.
    pub fn archived(&self, id: &str) -> Option<&Assertion> {
        self.archive.get(id)
    }

    /// Owner of a live assertion.
    pub fn owner_of(&self, id: &str) -> Option<&AgentId> {
        self.sets
            .iter()
            .find(|(_, s)| s.contains(id))
            .map(|(a, _)| a)
    }

    pub fn is_live(&self, id: &str) -> bool {
        self.owner_of(id).is_some()
    }

    fn commit(&mut self, actor: &AgentId, event: Event) -> u64 {
        self.journal
            .append(self.now, actor.clone(), event)
            .expect("timeline clock never regresses")
    }

    /// Admits `a` into `owner`'s set at the next tick. `born_at` is stamped
    /// with that tick.
    pub fn assert_statement(
        &mut self,
        owner: &AgentId,
        mut a: Assertion,
    ) -> Result<Assertion, JournalError> {
        a.validate()?;
        if self.archive.contains_key(&a.id) {
            return Err(KStoreError::DuplicateId(a.id).into());
        }
        self.register_agent(owner);
        let now = self.tick();
        a.born_at = now;
        let set = self.sets.get_mut(owner).expect("registered above");
        set.insert_raw(a.clone());
        set.as_of = now;
        self.archive.insert(a.id.clone(), a.clone());
        self.commit(
            owner,
            Event::Assert {
                assertion: a.clone(),
            },
        );
        Ok(a)
    }

    fn retract_live(&mut self, id: &str, reason: RetractReason) -> Result<Assertion, JournalError> {
        let owner = self
            .owner_of(id)
            .cloned()
            .ok_or_else(|| JournalError::NotLive(id.to_string()))?;
        let now = self.now;
        let set = self.sets.get_mut(&owner).expect("owner exists");
        let removed = set.remove(id).expect("live in owner set");
        set.as_of = now;
        self.commit(
            &owner,
            Event::Retract {
                id: id.to_string(),
                reason,
            },
        );
        Ok(removed)
    }

    /// Snapshots the live ids for `scope` and journals the checkpoint.
    pub fn take_checkpoint(&mut self, scope: Scope) -> Checkpoint {
        let live_snapshot = match &scope {
            Scope::Global => self
                .sets
                .iter()
                .map(|(a, s)| (a.clone(), s.ids()))
                .collect(),
            Scope::Agent(agent) => {
                self.register_agent(agent);
                let mut m = BTreeMap::new();
                m.insert(agent.clone(), self.sets[agent].ids());
                m
            }
        };
        let cp = Checkpoint {
            id: format!("cp-{:04}", self.checkpoints.len()),
            scope: scope.clone(),
            time: self.now,
            live_snapshot,
        };
        self.checkpoints.push(cp.clone());
        let actor = match &scope {
            Scope::Agent(a) => a.clone(),
            Scope::Global => AgentId::new(Scope::GLOBAL_TAG),
        };
        self.commit(
            &actor,
            Event::Checkpoint {
                checkpoint: cp.clone(),
            },
        );
        cp
    }

    pub fn checkpoint(&self, id: &str) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| c.id == id)
    }

    /// Checkpoints of `scope`, oldest first.
    pub fn checkpoints_for<'a>(&'a self, scope: &'a Scope) -> impl Iterator<Item = &'a Checkpoint> {
        self.checkpoints.iter().filter(move |c| &c.scope == scope)
    }

    pub fn latest_checkpoint(&self, scope: &Scope) -> Option<&Checkpoint> {
        self.checkpoints.iter().rev().find(|c| &c.scope == scope)
    }

    /// How many checkpoints of its scope lie at or after `checkpoint`
    /// (the most recent one has depth 1).
    pub fn checkpoint_depth(&self, checkpoint: &Checkpoint) -> usize {
        let chain: Vec<&Checkpoint> = self.checkpoints_for(&checkpoint.scope).collect();
        match chain.iter().position(|c| c.id == checkpoint.id) {
            Some(pos) => chain.len() - pos,
            None => 0,
        }
    }

    fn restore_agent(
        &mut self,
        agent: &AgentId,
        snapshot: &BTreeSet<String>,
        reason: RetractReason,
        retracted: &mut Vec<Assertion>,
        reinstated: &mut Vec<Reinstatement>,
    ) {
        self.register_agent(agent);
        let live: Vec<Assertion> = self.sets[agent].to_vec();
        for a in live {
            if !snapshot.contains(&a.id) && !a.protected {
                let removed = self
                    .retract_live(&a.id, reason)
                    .expect("assertion is live");
                retracted.push(removed);
            }
        }
        let now = self.now;
        let set = self.sets.get_mut(agent).expect("registered");
        for id in snapshot {
            if !set.contains(id) {
                let a = self.archive.get(id).expect("snapshot ids are archived").clone();
                set.insert_raw(a);
                reinstated.push(Reinstatement {
                    agent: agent.clone(),
                    id: id.clone(),
                });
            }
        }
        set.as_of = now;
    }

    /// Reverts one agent to a prior local checkpoint. Protected assertions
    /// survive; other agents are untouched.
    pub fn backtrack_local(
        &mut self,
        agent: &AgentId,
        checkpoint_id: &str,
    ) -> Result<RollbackOutcome, JournalError> {
        let cp = self
            .checkpoint(checkpoint_id)
            .cloned()
            .ok_or_else(|| JournalError::UnknownCheckpoint(checkpoint_id.to_string()))?;
        if cp.scope.as_agent() != Some(agent) {
            return Err(JournalError::ScopeMismatch {
                checkpoint: cp.id,
                expected: agent.to_string(),
                actual: cp.scope.to_string(),
            });
        }
        let depth = self.checkpoint_depth(&cp);
        if depth > self.local_depth {
            return Err(JournalError::DepthExceeded {
                checkpoint: cp.id,
                depth,
                limit: self.local_depth,
            });
        }
        self.tick();
        let empty = BTreeSet::new();
        let snapshot = cp.live_snapshot.get(agent).unwrap_or(&empty).clone();
        let mut retracted = Vec::new();
        let mut reinstated = Vec::new();
        self.restore_agent(
            agent,
            &snapshot,
            RetractReason::LocalBacktrack,
            &mut retracted,
            &mut reinstated,
        );
        self.commit(
            agent,
            Event::Rollback {
                scope: cp.scope.clone(),
                checkpoint: cp.id.clone(),
                retracted: retracted.iter().map(|a| a.id.clone()).collect(),
                reinstated: reinstated.clone(),
            },
        );
        Ok(RollbackOutcome {
            checkpoint: cp.id,
            scope: cp.scope,
            retracted,
            reinstated,
        })
    }

    /// Reverts every agent to a global checkpoint, keeping protected assertions.
    pub fn backtrack_global(
        &mut self,
        actor: &AgentId,
        checkpoint_id: &str,
    ) -> Result<RollbackOutcome, JournalError> {
        let cp = self
            .checkpoint(checkpoint_id)
            .cloned()
            .ok_or_else(|| JournalError::UnknownCheckpoint(checkpoint_id.to_string()))?;
        if cp.scope != Scope::Global {
            return Err(JournalError::ScopeMismatch {
                checkpoint: cp.id,
                expected: Scope::GLOBAL_TAG.to_string(),
                actual: cp.scope.to_string(),
            });
        }
        let agents: BTreeSet<AgentId> = self
            .sets
            .keys()
            .chain(cp.live_snapshot.keys())
            .cloned()
            .collect();
        self.tick();
        let empty = BTreeSet::new();
        let mut retracted = Vec::new();
        let mut reinstated = Vec::new();
        for agent in &agents {
            let snapshot = cp.live_snapshot.get(agent).unwrap_or(&empty).clone();
            self.restore_agent(
                agent,
                &snapshot,
                RetractReason::GlobalRollback,
                &mut retracted,
                &mut reinstated,
            );
        }
        self.commit(
            actor,
            Event::Rollback {
                scope: Scope::Global,
                checkpoint: cp.id.clone(),
                retracted: retracted.iter().map(|a| a.id.clone()).collect(),
                reinstated: reinstated.clone(),
            },
        );
        Ok(RollbackOutcome {
            checkpoint: cp.id,
            scope: Scope::Global,
            retracted,
            reinstated,
        })
    }

    /// Journals a challenge of `target` and retracts it. Protected
    /// assertions cannot be challenged away; use [`Timeline::override_assertion`].
    pub fn challenge(
        &mut self,
        actor: &AgentId,
        target: &str,
        rationale: &str,
    ) -> Result<Assertion, JournalError> {
        let owner = self
            .owner_of(target)
            .ok_or_else(|| JournalError::NotLive(target.to_string()))?;
        if self.sets[owner].get(target).is_some_and(|a| a.protected) {
            return Err(JournalError::Protected(target.to_string()));
        }
        self.tick();
        self.commit(
            actor,
            Event::Challenge {
                target: target.to_string(),
                rationale: rationale.to_string(),
            },
        );
        self.retract_live(target, RetractReason::Challenge)
    }

    /// Force-retracts `target`, protected or not.
    pub fn override_assertion(
        &mut self,
        actor: &AgentId,
        target: &str,
        rationale: &str,
    ) -> Result<Assertion, JournalError> {
        if !self.is_live(target) {
            return Err(JournalError::NotLive(target.to_string()));
        }
        self.tick();
        self.commit(
            actor,
            Event::Override {
                target: target.to_string(),
                rationale: rationale.to_string(),
            },
        );
        self.retract_live(target, RetractReason::Override)
    }

    /// Journals a delivered composite event at the current time.
    pub fn record_message(&mut self, actor: &AgentId, event: CompositeEvent) -> u64 {
        self.commit(actor, Event::Message { event })
    }

    pub fn record_final_answer(&mut self, actor: &AgentId, answer: &str, outcome: Outcome) -> u64 {
        self.final_answer = Some((answer.to_string(), outcome));
        self.commit(
            actor,
            Event::FinalAnswer {
                answer: answer.to_string(),
                outcome,
            },
        )
    }

    pub fn final_answer(&self) -> Option<&(String, Outcome)> {
        self.final_answer.as_ref()
    }

    pub fn live_state(&self) -> LiveState {
        LiveState {
            time: self.journal.last_time().unwrap_or(0),
            sets: self
                .sets
                .iter()
                .filter(|(_, s)| !s.is_empty())
                .map(|(a, s)| (a.clone(), s.to_vec()))
                .collect(),
            checkpoints: self.checkpoints.clone(),
            final_answer: self.final_answer.clone(),
        }
    }

    /// Live state as of logical time `at`, rebuilt from the log prefix.
    pub fn state_at(&self, at: LogicalTime) -> Result<LiveState, JournalError> {
        let end = self.entries().partition_point(|e| e.time <= at);
        replay(&self.entries()[..end])
    }

    pub fn register_temporal(&mut self, constraint: TemporalConstraint) -> usize {
        self.temporal.push(constraint);
        self.temporal.len() - 1
    }

    pub fn temporal_constraints(&self) -> &[TemporalConstraint] {
        &self.temporal
    }

    /// Evaluates every constraint against the global state at time `at`.
    ///
    /// Returns the `always` constraints that do not hold. `eventually`
    /// constraints that hold are marked satisfied and never reported here.
    pub fn check_temporal(&mut self, at: LogicalTime) -> Result<Vec<TemporalViolation>, JournalError> {
        let state = self.state_at(at)?;
        let global = state.global();
        let mut violations = Vec::new();
        for (i, c) in self.temporal.iter_mut().enumerate() {
            if c.created_at > at {
                continue;
            }
            let holds = global.iter().any(|a| a.matches(&c.proposition));
            match c.kind {
                TemporalKind::Always if !holds => violations.push(TemporalViolation {
                    constraint: i,
                    kind: c.kind,
                    proposition: c.proposition.clone(),
                    at,
                }),
                TemporalKind::Eventually if holds => c.satisfied = true,
                _ => {}
            }
        }
        Ok(violations)
    }

    /// End-of-run warnings: `eventually` constraints never observed to hold.
    pub fn temporal_warnings(&self) -> Vec<TemporalViolation> {
        self.temporal
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == TemporalKind::Eventually && !c.satisfied)
            .map(|(i, c)| TemporalViolation {
                constraint: i,
                kind: c.kind,
                proposition: c.proposition.clone(),
                at: self.now,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kstore::Assertion;
    use alloc::vec;

    fn agent(s: &str) -> AgentId {
        AgentId::new(s)
    }

    fn reg() -> PredicateRegistry {
        PredicateRegistry::new().with_functional("population")
    }

    #[test]
    fn append_assigns_sequence_numbers() {
        let mut j = Journal::new();
        let fa = Event::FinalAnswer {
            answer: "x".into(),
            outcome: Outcome::Answered,
        };
        assert_eq!(j.append(0, agent("a"), fa.clone()).unwrap(), 0);
        assert_eq!(j.append(0, agent("a"), fa.clone()).unwrap(), 1);
        assert_eq!(j.append(3, agent("a"), fa.clone()).unwrap(), 2);
        assert_eq!(
            j.append(2, agent("a"), fa).unwrap_err(),
            JournalError::TimeRegression { last: 3, got: 2 }
        );
        assert_eq!(j.len(), 3);
    }

    #[test]
    fn checkpoint_of_empty_state() {
        let mut t = Timeline::new(reg());
        let cp = t.take_checkpoint(Scope::agent("verifier"));
        assert_eq!(cp.live_snapshot[&agent("verifier")].len(), 0);
        let g = t.take_checkpoint(Scope::Global);
        assert!(g.live_snapshot.values().all(|s| s.is_empty()));
    }

    #[test]
    fn checkpoint_after_three_asserts() {
        let mut t = Timeline::new(reg());
        let v = agent("verifier");
        for i in 0..3 {
            t.assert_statement(&v, Assertion::new(format!("a{i}"), "s", "p", format!("o{i}")))
                .unwrap();
        }
        let cp = t.take_checkpoint(Scope::Agent(v.clone()));
        assert_eq!(cp.live_snapshot[&v].len(), 3);
        assert_eq!(cp.time, 3);
    }

    #[test]
    fn global_checkpoint_covers_every_agent() {
        let mut t = Timeline::new(reg());
        t.assert_statement(&agent("r"), Assertion::new("a1", "s", "p", "o"))
            .unwrap();
        t.assert_statement(&agent("v"), Assertion::new("a2", "s", "p", "o2"))
            .unwrap();
        let cp = t.take_checkpoint(Scope::Global);
        let union: BTreeSet<String> = cp.live_snapshot.values().flatten().cloned().collect();
        assert_eq!(union, t.global_set().ids());
        assert_eq!(cp.live_snapshot.len(), 2);
    }

    #[test]
    fn local_backtrack_restores_snapshot_and_keeps_protected() {
        let mut t = Timeline::new(reg());
        let v = agent("verifier");
        let other = agent("retriever");
        t.assert_statement(&v, Assertion::new("a1", "Sacramento", "population", "508000"))
            .unwrap();
        t.assert_statement(&other, Assertion::new("r1", "doc", "evidence for", "q2"))
            .unwrap();
        t.tick();
        let cp = t.take_checkpoint(Scope::Agent(v.clone()));
        assert_eq!(cp.time, 3);
        t.assert_statement(&v, Assertion::new("a2", "axiom", "holds", "yes").protect())
            .unwrap();
        t.assert_statement(&v, Assertion::new("a3", "Sacramento", "population", "1500000"))
            .unwrap();
        assert_eq!(t.now(), 5);
        let out = t.backtrack_local(&v, &cp.id).unwrap();
        assert_eq!(out.retracted.len(), 1);
        assert_eq!(out.retracted[0].id, "a3");
        let ids = t.knowledge_set(&v).unwrap().ids();
        assert_eq!(ids, ["a1", "a2"].iter().map(|s| s.to_string()).collect());
        assert!(t.knowledge_set(&other).unwrap().contains("r1"));
        assert_eq!(t.journal().count(EntryKind::Rollback), 1);
        assert_eq!(t.journal().count(EntryKind::Retract), 1);
    }

    #[test]
    fn local_backtrack_to_current_checkpoint_is_noop() {
        let mut t = Timeline::new(reg());
        let v = agent("verifier");
        t.assert_statement(&v, Assertion::new("a1", "s", "p", "o")).unwrap();
        let cp = t.take_checkpoint(Scope::Agent(v.clone()));
        let before = t.knowledge_set(&v).unwrap().ids();
        let out = t.backtrack_local(&v, &cp.id).unwrap();
        assert!(out.retracted.is_empty() && out.reinstated.is_empty());
        assert_eq!(t.knowledge_set(&v).unwrap().ids(), before);
    }

    #[test]
    fn local_backtrack_errors() {
        let mut t = Timeline::new(reg()).with_local_depth(1);
        let v = agent("verifier");
        let old = t.take_checkpoint(Scope::Agent(v.clone()));
        let _newer = t.take_checkpoint(Scope::Agent(v.clone()));
        assert!(matches!(
            t.backtrack_local(&v, &old.id),
            Err(JournalError::DepthExceeded { depth: 2, limit: 1, .. })
        ));
        let g = t.take_checkpoint(Scope::Global);
        assert!(matches!(
            t.backtrack_local(&v, &g.id),
            Err(JournalError::ScopeMismatch { .. })
        ));
        assert!(matches!(
            t.backtrack_global(&v, &old.id),
            Err(JournalError::ScopeMismatch { .. })
        ));
        let mut disabled = Timeline::new(reg()).with_local_depth(0);
        let cp = disabled.take_checkpoint(Scope::Agent(v.clone()));
        assert!(matches!(
            disabled.backtrack_local(&v, &cp.id),
            Err(JournalError::DepthExceeded { .. })
        ));
    }

    #[test]
    fn global_rollback_discards_later_statements() {
        let mut t = Timeline::new(reg().with_functional("capital"));
        let s = agent("supervisor");
        t.assert_statement(&agent("v"), Assertion::new("a1", "California", "capital", "Sacramento"))
            .unwrap();
        let cp = t.take_checkpoint(Scope::Global);
        t.assert_statement(&agent("r"), Assertion::new("a2", "California", "capital", "Los Angeles"))
            .unwrap();
        t.assert_statement(&agent("q"), Assertion::new("a3", "x", "y", "z"))
            .unwrap();
        let out = t.backtrack_global(&s, &cp.id).unwrap();
        let gone: Vec<&str> = out.retracted.iter().map(|a| a.id.as_str()).collect();
        assert_eq!(gone, vec!["a3", "a2"]);
        assert_eq!(t.global_set().ids(), ["a1".to_string()].into_iter().collect());
        let replayed = replay(t.entries()).unwrap();
        assert_eq!(replayed, t.live_state());
    }

    #[test]
    fn global_rollback_without_intervening_events() {
        let mut t = Timeline::new(reg());
        t.assert_statement(&agent("v"), Assertion::new("a1", "s", "p", "o"))
            .unwrap();
        let cp = t.take_checkpoint(Scope::Global);
        let before = t.global_set().ids();
        t.backtrack_global(&agent("supervisor"), &cp.id).unwrap();
        assert_eq!(t.global_set().ids(), before);
    }

    #[test]
    fn rollback_reinstates_later_retractions() {
        let mut t = Timeline::new(reg());
        let v = agent("v");
        t.assert_statement(&v, Assertion::new("a1", "s", "p", "o")).unwrap();
        let cp = t.take_checkpoint(Scope::Global);
        t.challenge(&agent("controller"), "a1", "suspicious").unwrap();
        assert!(!t.is_live("a1"));
        let out = t.backtrack_global(&agent("supervisor"), &cp.id).unwrap();
        assert_eq!(out.reinstated.len(), 1);
        assert!(t.is_live("a1"));
        assert_eq!(replay(t.entries()).unwrap(), t.live_state());
    }

    #[test]
    fn challenge_and_override() {
        let mut t = Timeline::new(reg());
        let v = agent("v");
        let c = agent("controller");
        t.assert_statement(&v, Assertion::new("ax", "s", "p", "o").protect())
            .unwrap();
        assert!(matches!(
            t.challenge(&c, "ax", "why"),
            Err(JournalError::Protected(_))
        ));
        t.override_assertion(&c, "ax", "forced").unwrap();
        assert!(!t.is_live("ax"));
        assert_eq!(t.journal().count(EntryKind::Override), 1);
        assert!(matches!(
            t.override_assertion(&c, "ax", "again"),
            Err(JournalError::NotLive(_))
        ));
    }

    #[test]
    fn ids_unique_within_run() {
        let mut t = Timeline::new(reg());
        let v = agent("v");
        t.assert_statement(&v, Assertion::new("a1", "s", "p", "o")).unwrap();
        let cp = t.take_checkpoint(Scope::Global);
        let _ = cp;
        assert!(t
            .assert_statement(&agent("w"), Assertion::new("a1", "s", "p", "o"))
            .is_err());
    }

    #[test]
    fn replay_empty_log() {
        let state = replay(&[]).unwrap();
        assert!(state.sets.is_empty());
        assert_eq!(state.time, 0);
    }

    #[test]
    fn ndjson_round_trip_and_corrupt_line() {
        let mut t = Timeline::new(reg());
        t.assert_statement(&agent("v"), Assertion::new("a1", "s", "p", "o"))
            .unwrap();
        t.take_checkpoint(Scope::Global);
        let text = t.journal().to_ndjson();
        assert_eq!(text.lines().count(), 2);
        let parsed = parse_ndjson(&text).unwrap();
        assert_eq!(parsed, t.entries());
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for field in ["seq", "time", "kind", "actor", "payload"] {
            assert!(first.get(field).is_some(), "missing {field}");
        }
        assert_eq!(first["kind"], "assert");
        let broken = format!("{}{{not json\n", text);
        assert!(matches!(
            parse_ndjson(&broken),
            Err(JournalError::CorruptLog { line: 3, .. })
        ));
    }

    #[test]
    fn replay_rejects_inconsistent_logs() {
        let mut t = Timeline::new(reg());
        let v = agent("v");
        t.assert_statement(&v, Assertion::new("a1", "s", "p", "o")).unwrap();
        let mut entries = t.entries().to_vec();
        entries.push(JournalEntry {
            seq: 1,
            time: 1,
            actor: v.clone(),
            event: Event::Retract {
                id: "nope".into(),
                reason: RetractReason::Challenge,
            },
        });
        assert!(matches!(
            replay(&entries),
            Err(JournalError::CorruptLog { line: 2, .. })
        ));
        let mut dup = t.entries().to_vec();
        let mut again = dup[0].clone();
        again.seq = 0;
        dup.push(again);
        assert!(matches!(replay(&dup), Err(JournalError::CorruptLog { .. })));
    }

    #[test]
    fn always_constraint_holds_while_live() {
        let mut t = Timeline::new(reg());
        let a = t
            .assert_statement(&agent("v"), Assertion::new("a1", "California", "capital", "Sacramento"))
            .unwrap();
        t.register_temporal(TemporalConstraint::always(a.pattern(), t.now()));
        t.assert_statement(&agent("v"), Assertion::new("a2", "x", "y", "z"))
            .unwrap();
        let now = t.now();
        assert!(t.check_temporal(now).unwrap().is_empty());
    }

    #[test]
    fn always_constraint_violated_after_rollback_of_unprotected_twin() {
        let mut t = Timeline::new(reg());
        let cp = t.take_checkpoint(Scope::Global);
        let a = t
            .assert_statement(&agent("v"), Assertion::new("a1", "California", "capital", "Sacramento"))
            .unwrap();
        t.register_temporal(TemporalConstraint::always(a.pattern(), t.now()));
        let held_at = t.now();
        t.backtrack_global(&agent("supervisor"), &cp.id).unwrap();
        let tick = t.tick();
        assert!(t.check_temporal(held_at).unwrap().is_empty());
        let v = t.check_temporal(tick).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].at, tick);
        assert_eq!(v[0].kind, TemporalKind::Always);
    }

    #[test]
    fn eventually_constraint() {
        let mut t = Timeline::new(reg());
        let p = Assertion::new("p", "case", "culprit", "B").pattern();
        let q = Assertion::new("q", "case", "culprit", "Z").pattern();
        t.register_temporal(TemporalConstraint::eventually(p, 0));
        t.register_temporal(TemporalConstraint::eventually(q, 0));
        t.assert_statement(&agent("v"), Assertion::new("a1", "case", "culprit", "B"))
            .unwrap();
        let now = t.now();
        assert!(t.check_temporal(now).unwrap().is_empty());
        assert!(t.temporal_constraints()[0].satisfied);
        let warnings = t.temporal_warnings();
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].constraint, 1);
    }
}
