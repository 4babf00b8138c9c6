//! Assertion storage, consistency checking and conflict-set extraction.
//!
//! Consistency is decided over a restricted, decidable fragment: two live
//! assertions contradict when they state the same triple with opposite
//! polarity, or when they give different objects for the same subject under a
//! predicate registered as functional. No inference happens here; deriving new
//! facts is an agent concern.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Logical time. Every journal commit happens at some tick.
pub type LogicalTime = u64;

/// Identifier of an agent (or worker) owning a knowledge set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub String);

impl AgentId {
    pub fn new(id: impl Into<String>) -> Self {
        AgentId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        AgentId(s.to_string())
    }
}

/// Owner of a knowledge set: one agent, or the union over all agents.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    Global,
    Agent(AgentId),
}

impl Scope {
    pub const GLOBAL_TAG: &'static str = "GLOBAL";

    pub fn agent(id: impl Into<String>) -> Self {
        Scope::Agent(AgentId::new(id))
    }

    pub fn as_agent(&self) -> Option<&AgentId> {
        match self {
            Scope::Agent(a) => Some(a),
            Scope::Global => None,
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Global => f.write_str(Self::GLOBAL_TAG),
            Scope::Agent(a) => f.write_str(a.as_str()),
        }
    }
}

impl Serialize for Scope {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Scope::Global => s.serialize_str(Self::GLOBAL_TAG),
            Scope::Agent(a) => s.serialize_str(a.as_str()),
        }
    }
}

impl<'de> Deserialize<'de> for Scope {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        if raw == Self::GLOBAL_TAG {
            Ok(Scope::Global)
        } else {
            Ok(Scope::Agent(AgentId(raw)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn flip(self) -> Self {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        }
    }
}

/// A polarized subject/predicate/object statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub id: String,
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub polarity: Polarity,
    pub confidence: f64,
    pub source: AgentId,
    pub born_at: LogicalTime,
    pub protected: bool,
}

impl Assertion {
    /// A positive, unprotected assertion with full confidence, born at 0.
    pub fn new(
        id: impl Into<String>,
        subject: impl Into<String>,
        predicate: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        Assertion {
            id: id.into(),
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
            polarity: Polarity::Positive,
            confidence: 1.0,
            source: AgentId::new("unknown"),
            born_at: 0,
            protected: false,
        }
    }

    pub fn negated(mut self) -> Self {
        self.polarity = self.polarity.flip();
        self
    }

    pub fn with_polarity(mut self, polarity: Polarity) -> Self {
        self.polarity = polarity;
        self
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = AgentId::new(source);
        self
    }

    pub fn born(mut self, at: LogicalTime) -> Self {
        self.born_at = at;
        self
    }

    pub fn protect(mut self) -> Self {
        self.protected = true;
        self
    }

    /// Checks the field-level invariants of a single assertion.
    pub fn validate(&self) -> Result<(), KStoreError> {
        if self.id.is_empty() {
            return Err(KStoreError::InvalidAssertion {
                id: self.id.clone(),
                reason: "empty id",
            });
        }
        if !(0.0..=1.0).contains(&self.confidence) || self.confidence.is_nan() {
            return Err(KStoreError::InvalidAssertion {
                id: self.id.clone(),
                reason: "confidence outside [0, 1]",
            });
        }
        Ok(())
    }

    /// Normalized `(subject, predicate, object, polarity)` used for every
    /// equality test in this module.
    pub fn key(&self) -> TripleKey {
        TripleKey {
            subject: normalize_term(&self.subject),
            predicate: normalize_term(&self.predicate),
            object: normalize_term(&self.object),
            polarity: self.polarity,
        }
    }

    /// Whether `self` matches `pattern` on all four content fields.
    pub fn matches(&self, pattern: &Pattern) -> bool {
        self.polarity == pattern.polarity
            && normalize_term(&self.subject) == normalize_term(&pattern.subject)
            && normalize_term(&self.predicate) == normalize_term(&pattern.predicate)
            && normalize_term(&self.object) == normalize_term(&pattern.object)
    }

    pub fn pattern(&self) -> Pattern {
        Pattern {
            subject: self.subject.clone(),
            predicate: self.predicate.clone(),
            object: self.object.clone(),
            polarity: self.polarity,
        }
    }
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} | {} | {} | {} | {}",
            self.subject,
            self.predicate,
            self.object,
            self.polarity.as_str(),
            self.confidence
        )
    }
}

/// The content of an assertion without identity or provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TripleKey {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub polarity: Polarity,
}

/// Trim and case-fold a term for comparison.
pub fn normalize_term(s: &str) -> String {
    s.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateSchema {
    pub name: String,
    /// At most one object per subject.
    pub functional: bool,
}

/// Registry of predicate schemas, keyed by normalized name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredicateRegistry {
    schemas: BTreeMap<String, PredicateSchema>,
}

#[derive(Serialize, Deserialize)]
struct RegistryFile {
    predicates: Vec<PredicateSchema>,
}

impl PredicateRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_schemas(
        schemas: impl IntoIterator<Item = PredicateSchema>,
    ) -> Result<Self, KStoreError> {
        let mut reg = Self::new();
        for s in schemas {
            reg.register(s)?;
        }
        Ok(reg)
    }

    /// Parses `{"predicates":[{"name":..,"functional":..},...]}`.
    pub fn from_json(text: &str) -> Result<Self, KStoreError> {
        let file: RegistryFile =
            serde_json::from_str(text).map_err(|e| KStoreError::Registry(e.to_string()))?;
        Self::from_schemas(file.predicates)
    }

    pub fn to_json(&self) -> String {
        let file = RegistryFile {
            predicates: self.schemas.values().cloned().collect(),
        };
        serde_json::to_string(&file).expect("registry serializes")
    }

    pub fn register(&mut self, schema: PredicateSchema) -> Result<(), KStoreError> {
        let key = normalize_term(&schema.name);
        if self.schemas.contains_key(&key) {
            return Err(KStoreError::DuplicatePredicate(schema.name));
        }
        self.schemas.insert(key, schema);
        Ok(())
    }

    /// Registers `name` as functional, ignoring duplicates.
    pub fn with_functional(mut self, name: &str) -> Self {
        let _ = self.register(PredicateSchema {
            name: name.to_string(),
            functional: true,
        });
        self
    }

    pub fn is_functional(&self, predicate: &str) -> bool {
        self.schemas
            .get(&normalize_term(predicate))
            .is_some_and(|s| s.functional)
    }

    pub fn schemas(&self) -> impl Iterator<Item = &PredicateSchema> {
        self.schemas.values()
    }

    pub fn len(&self) -> usize {
        self.schemas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schemas.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConflictKind {
    PolarityClash,
    FunctionalClash,
}

/// A set of live assertions that cannot all hold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub kind: ConflictKind,
    /// Sorted ascending.
    pub members: Vec<String>,
    pub detected_at: LogicalTime,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KStoreError {
    #[error("assertion id `{0}` is already live")]
    DuplicateId(String),
    #[error("assertion set is consistent; no conflict to extract")]
    NoConflict,
    #[error("invalid assertion `{id}`: {reason}")]
    InvalidAssertion { id: String, reason: &'static str },
    #[error("predicate `{0}` registered twice")]
    DuplicatePredicate(String),
    #[error("predicate registry: {0}")]
    Registry(String),
}

/// Classifies the clash between two assertions, if any.
pub fn clash_kind(a: &Assertion, b: &Assertion, reg: &PredicateRegistry) -> Option<ConflictKind> {
    let subject = normalize_term(&a.subject);
    if subject != normalize_term(&b.subject) {
        return None;
    }
    let predicate = normalize_term(&a.predicate);
    if predicate != normalize_term(&b.predicate) {
        return None;
    }
    let same_object = normalize_term(&a.object) == normalize_term(&b.object);
    if same_object && a.polarity != b.polarity {
        return Some(ConflictKind::PolarityClash);
    }
    if !same_object
        && a.polarity == Polarity::Positive
        && b.polarity == Polarity::Positive
        && reg.is_functional(&predicate)
    {
        return Some(ConflictKind::FunctionalClash);
    }
    None
}

/// True iff `a` and `b` cannot both hold.
pub fn contradicts(a: &Assertion, b: &Assertion, reg: &PredicateRegistry) -> bool {
    clash_kind(a, b, reg).is_some()
}

/// Consistency of an arbitrary collection of assertions.
pub fn consistent<'a, I>(assertions: I, reg: &PredicateRegistry) -> bool
where
    I: IntoIterator<Item = &'a Assertion>,
{
    // Bucket by (subject, predicate); clashes only happen inside a bucket.
    let mut buckets: BTreeMap<(String, String), Vec<&Assertion>> = BTreeMap::new();
    for a in assertions {
        buckets
            .entry((normalize_term(&a.subject), normalize_term(&a.predicate)))
            .or_default()
            .push(a);
    }
    for ((_, predicate), group) in &buckets {
        let functional = reg.is_functional(predicate);
        let mut positive: BTreeSet<String> = BTreeSet::new();
        let mut negative: BTreeSet<String> = BTreeSet::new();
        for a in group {
            let object = normalize_term(&a.object);
            match a.polarity {
                Polarity::Positive => {
                    positive.insert(object);
                }
                Polarity::Negative => {
                    negative.insert(object);
                }
            }
        }
        if positive.intersection(&negative).next().is_some() {
            return false;
        }
        if functional && positive.len() > 1 {
            return false;
        }
    }
    true
}

/// Total order used whenever one member of a conflict must be given up:
/// lowest confidence first, then latest birth, then highest id.
pub fn retraction_order(a: &Assertion, b: &Assertion) -> Ordering {
    a.confidence
        .total_cmp(&b.confidence)
        .then_with(|| b.born_at.cmp(&a.born_at))
        .then_with(|| b.id.cmp(&a.id))
}

/// The first assertion to give up among `members`.
pub fn retraction_candidate<'a, I>(members: I) -> Option<&'a Assertion>
where
    I: IntoIterator<Item = &'a Assertion>,
{
    members.into_iter().min_by(|a, b| retraction_order(a, b))
}

/// Deletion-based extraction of a subset-minimal inconsistent subset.
///
/// Elements are tried for removal in ascending id order; a removal is kept
/// whenever the remainder is still inconsistent.
pub fn minimal_conflict_set(
    assertions: &[Assertion],
    reg: &PredicateRegistry,
    detected_at: LogicalTime,
) -> Result<ConflictReport, KStoreError> {
    let mut working: Vec<&Assertion> = assertions.iter().collect();
    working.sort_by(|a, b| a.id.cmp(&b.id));
    if consistent(working.iter().copied(), reg) {
        return Err(KStoreError::NoConflict);
    }
    let mut i = 0;
    while i < working.len() {
        let removed = working.remove(i);
        if consistent(working.iter().copied(), reg) {
            working.insert(i, removed);
            i += 1;
        }
    }
    let kind = match working.as_slice() {
        [a, b] => clash_kind(a, b, reg).unwrap_or(ConflictKind::FunctionalClash),
        _ => ConflictKind::FunctionalClash,
    };
    Ok(ConflictReport {
        kind,
        members: working.iter().map(|a| a.id.clone()).collect(),
        detected_at,
    })
}

/// The live assertions of one owner (or the global union) at a logical time.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeSet {
    pub owner: Scope,
    live: BTreeMap<String, Assertion>,
    pub as_of: LogicalTime,
}

impl KnowledgeSet {
    pub fn new(owner: Scope) -> Self {
        KnowledgeSet {
            owner,
            live: BTreeMap::new(),
            as_of: 0,
        }
    }

    pub fn from_assertions(
        owner: Scope,
        as_of: LogicalTime,
        assertions: impl IntoIterator<Item = Assertion>,
    ) -> Self {
        KnowledgeSet {
            owner,
            live: assertions.into_iter().map(|a| (a.id.clone(), a)).collect(),
            as_of,
        }
    }

    /// Inserts `a` as live and advances `as_of` by one tick.
    ///
    /// Never removes anything; conflicting assertions are admitted and left
    /// for [`KnowledgeSet::find_conflicts`] to report.
    pub fn assert_statement(&mut self, a: Assertion) -> Result<(), KStoreError> {
        a.validate()?;
        if self.live.contains_key(&a.id) {
            return Err(KStoreError::DuplicateId(a.id));
        }
        self.live.insert(a.id.clone(), a);
        self.as_of += 1;
        Ok(())
    }

    /// Inserts without touching the clock. Used by restores and replays.
    pub(crate) fn insert_raw(&mut self, a: Assertion) {
        self.live.insert(a.id.clone(), a);
    }

    pub(crate) fn remove(&mut self, id: &str) -> Option<Assertion> {
        self.live.remove(id)
    }

    pub fn get(&self, id: &str) -> Option<&Assertion> {
        self.live.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.live.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    /// Live assertions in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &Assertion> {
        self.live.values()
    }

    pub fn ids(&self) -> BTreeSet<String> {
        self.live.keys().cloned().collect()
    }

    pub fn to_vec(&self) -> Vec<Assertion> {
        self.live.values().cloned().collect()
    }

    pub fn is_consistent(&self, reg: &PredicateRegistry) -> bool {
        consistent(self.live.values(), reg)
    }

    /// One report per contradicting pair, ordered by (min id, max id).
    pub fn find_conflicts(&self, reg: &PredicateRegistry) -> Vec<ConflictReport> {
        let all: Vec<&Assertion> = self.live.values().collect();
        let mut reports = Vec::new();
        // `all` is id-sorted, so (all[i].id, all[j].id) with i < j is already (min, max).
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                if let Some(kind) = clash_kind(a, b, reg) {
                    reports.push(ConflictReport {
                        kind,
                        members: alloc::vec![a.id.clone(), b.id.clone()],
                        detected_at: self.as_of,
                    });
                }
            }
        }
        reports
    }

    /// Literal entailment: some live assertion matches `query` on all content fields.
    pub fn entails(&self, query: &Assertion) -> bool {
        self.entails_pattern(&query.pattern())
    }

    pub fn entails_pattern(&self, pattern: &Pattern) -> bool {
        self.live.values().any(|a| a.matches(pattern))
    }

    pub fn minimal_conflict_set(
        &self,
        reg: &PredicateRegistry,
    ) -> Result<ConflictReport, KStoreError> {
        minimal_conflict_set(&self.to_vec(), reg, self.as_of)
    }
}
