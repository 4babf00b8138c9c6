//! Backend boundary and the deterministic scripted backend.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::AgentRole;
use crate::kstore::normalize_term;

#[derive(Debug, Clone, Copy)]
pub struct BackendRequest<'a> {
    pub role: AgentRole,
    /// Lookup key: the question, sub-question or evidence source.
    pub key: &'a str,
    pub system: &'a str,
    pub user: &'a str,
    pub temperature: f64,
    /// 0 for the first call, then one per repair.
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("{0}")]
    Failure(String),
    #[error("no scripted reply for `{0}`")]
    MissingScript(String),
}

pub trait Backend: Send + Sync {
    fn complete(&self, req: &BackendRequest<'_>) -> Result<String, BackendError>;
}

/// One scripted reply, or a list indexed by repair attempt (the last one
/// repeats).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptEntry {
    Attempts(Vec<serde_json::Value>),
    Single(serde_json::Value),
}

impl ScriptEntry {
    fn replies(&self) -> Vec<String> {
        let render = |v: &serde_json::Value| match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        match self {
            ScriptEntry::Single(v) => vec![render(v)],
            ScriptEntry::Attempts(vs) => vs.iter().map(render).collect(),
        }
    }
}

/// Canned replies per role, keyed by input key.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptTable {
    #[serde(default)]
    pub decomposer: BTreeMap<String, ScriptEntry>,
    #[serde(default)]
    pub retriever: BTreeMap<String, ScriptEntry>,
    #[serde(default)]
    pub verifier: BTreeMap<String, ScriptEntry>,
    #[serde(default)]
    pub assembler: BTreeMap<String, ScriptEntry>,
    #[serde(default)]
    pub supervisor: BTreeMap<String, ScriptEntry>,
    #[serde(default)]
    pub controller: BTreeMap<String, ScriptEntry>,
}

impl ScriptTable {
    fn sections(&self) -> [(AgentRole, &BTreeMap<String, ScriptEntry>); 6] {
        [
            (AgentRole::Decomposer, &self.decomposer),
            (AgentRole::Retriever, &self.retriever),
            (AgentRole::Verifier, &self.verifier),
            (AgentRole::Assembler, &self.assembler),
            (AgentRole::Supervisor, &self.supervisor),
            (AgentRole::Controller, &self.controller),
        ]
    }

    /// Appends all entries of `other`; existing keys are kept.
    pub fn merge(&mut self, other: ScriptTable) {
        let ScriptTable {
            decomposer,
            retriever,
            verifier,
            assembler,
            supervisor,
            controller,
        } = other;
        for (dst, src) in [
            (&mut self.decomposer, decomposer),
            (&mut self.retriever, retriever),
            (&mut self.verifier, verifier),
            (&mut self.assembler, assembler),
            (&mut self.supervisor, supervisor),
            (&mut self.controller, controller),
        ] {
            for (k, v) in src {
                dst.entry(k).or_insert(v);
            }
        }
    }
}

/// Table-driven backend. Keys match exactly, or after trim + lowercase.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    table: BTreeMap<(AgentRole, String), Vec<String>>,
    calls: AtomicU64,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_table(table: &ScriptTable) -> Self {
        let mut b = Self::new();
        for (role, section) in table.sections() {
            for (key, entry) in section {
                b.insert(role, key, entry.replies());
            }
        }
        b
    }

    pub fn insert(&mut self, role: AgentRole, key: &str, replies: Vec<String>) {
        self.table.insert((role, key.to_string()), replies);
    }

    pub fn has(&self, role: AgentRole, key: &str) -> bool {
        self.lookup(role, key).is_some()
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn lookup(&self, role: AgentRole, key: &str) -> Option<&Vec<String>> {
        self.table.get(&(role, key.to_string())).or_else(|| {
            let norm = normalize_term(key);
            self.table
                .iter()
                .find(|((r, k), _)| *r == role && normalize_term(k) == norm)
                .map(|(_, v)| v)
        })
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, req: &BackendRequest<'_>) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let replies = self
            .lookup(req.role, req.key)
            .ok_or_else(|| BackendError::MissingScript(req.key.to_string()))?;
        let i = (req.attempt as usize).min(replies.len().saturating_sub(1));
        replies
            .get(i)
            .cloned()
            .ok_or_else(|| BackendError::MissingScript(req.key.to_string()))
    }
}
