//! In-process typed messaging with per-round composite delivery.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::journal::Timeline;
use crate::kstore::{contradicts, AgentId, Assertion, LogicalTime, PredicateRegistry};

/// Actor recorded on journal entries written by the bus.
pub const BUS_ACTOR: &str = "bus";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageKind {
    Assert,
    Inform,
    Reject,
    Challenge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRecipients", into = "RawRecipients")]
pub enum Recipients {
    Broadcast,
    List(Vec<AgentId>),
}

impl Recipients {
    pub const BROADCAST_TAG: &'static str = "BROADCAST";

    pub fn includes(&self, agent: &AgentId) -> bool {
        match self {
            Recipients::Broadcast => true,
            Recipients::List(l) => l.contains(agent),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawRecipients {
    Tag(String),
    List(Vec<AgentId>),
}

impl TryFrom<RawRecipients> for Recipients {
    type Error = String;

    fn try_from(raw: RawRecipients) -> Result<Self, Self::Error> {
        match raw {
            RawRecipients::Tag(t) if t == Recipients::BROADCAST_TAG => Ok(Recipients::Broadcast),
            RawRecipients::Tag(t) => Err(alloc::format!("unknown recipient tag `{t}`")),
            RawRecipients::List(l) => Ok(Recipients::List(l)),
        }
    }
}

impl From<Recipients> for RawRecipients {
    fn from(r: Recipients) -> Self {
        match r {
            Recipients::Broadcast => RawRecipients::Tag(Recipients::BROADCAST_TAG.to_string()),
            Recipients::List(l) => RawRecipients::List(l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Assertion(Assertion),
    Body(serde_json::Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub id: String,
    pub sender: AgentId,
    pub recipients: Recipients,
    pub kind: MessageKind,
    pub payload: Payload,
    /// Set on delivery.
    pub logical_time: LogicalTime,
}

impl Message {
    pub fn new(
        id: impl Into<String>,
        sender: AgentId,
        recipients: Recipients,
        kind: MessageKind,
        payload: Payload,
    ) -> Self {
        Message {
            id: id.into(),
            sender,
            recipients,
            kind,
            payload,
            logical_time: 0,
        }
    }

    pub fn assert(id: impl Into<String>, sender: AgentId, a: Assertion) -> Self {
        Self::new(id, sender, Recipients::Broadcast, MessageKind::Assert, Payload::Assertion(a))
    }

    pub fn inform(id: impl Into<String>, sender: AgentId, body: serde_json::Value) -> Self {
        Self::new(id, sender, Recipients::Broadcast, MessageKind::Inform, Payload::Body(body))
    }

    pub fn assertion(&self) -> Option<&Assertion> {
        match &self.payload {
            Payload::Assertion(a) => Some(a),
            Payload::Body(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeEvent {
    pub time: LogicalTime,
    pub messages: Vec<Message>,
    pub flagged_conflicts: Vec<(String, String)>,
}

impl CompositeEvent {
    /// Merges one round of messages at `time` in canonical order.
    pub fn compose(mut messages: Vec<Message>, time: LogicalTime, reg: &PredicateRegistry) -> Self {
        for m in &mut messages {
            m.logical_time = time;
        }
        messages.sort_by(|a, b| (&a.sender, &a.id).cmp(&(&b.sender, &b.id)));
        let asserts: Vec<&Assertion> = messages
            .iter()
            .filter(|m| m.kind == MessageKind::Assert)
            .filter_map(Message::assertion)
            .collect();
        let mut flagged = BTreeSet::new();
        for (i, a) in asserts.iter().enumerate() {
            for b in &asserts[i + 1..] {
                if a.id != b.id && contradicts(a, b, reg) {
                    let pair = if a.id < b.id {
                        (a.id.clone(), b.id.clone())
                    } else {
                        (b.id.clone(), a.id.clone())
                    };
                    flagged.insert(pair);
                }
            }
        }
        CompositeEvent {
            time,
            messages,
            flagged_conflicts: flagged.into_iter().collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BusError {
    #[error("unknown sender `{0}`")]
    UnknownSender(AgentId),
    #[error("message id `{0}` already used in this run")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub id: String,
    pub queued: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Bus {
    registered: BTreeSet<AgentId>,
    queue: Vec<Message>,
    used_ids: BTreeSet<String>,
    delivered: Vec<CompositeEvent>,
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, agent: &AgentId) {
        self.registered.insert(agent.clone());
    }

    pub fn is_registered(&self, agent: &AgentId) -> bool {
        self.registered.contains(agent)
    }

    /// Queues a message for the current round.
    pub fn send(&mut self, m: Message) -> Result<Receipt, BusError> {
        if !self.registered.contains(&m.sender) {
            return Err(BusError::UnknownSender(m.sender));
        }
        if !self.used_ids.insert(m.id.clone()) {
            return Err(BusError::DuplicateId(m.id));
        }
        let id = m.id.clone();
        self.queue.push(m);
        Ok(Receipt {
            id,
            queued: self.queue.len(),
        })
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Delivers everything queued as one composite event at the next tick
    /// and journals it.
    pub fn deliver_round(&mut self, timeline: &mut Timeline) -> CompositeEvent {
        let time = timeline.tick();
        let messages = core::mem::take(&mut self.queue);
        let event = CompositeEvent::compose(messages, time, timeline.registry());
        timeline.record_message(&AgentId::new(BUS_ACTOR), event.clone());
        self.delivered.push(event.clone());
        event
    }

    /// Every composite event delivered so far.
    pub fn history(&self) -> &[CompositeEvent] {
        &self.delivered
    }

    /// Delivered messages visible to `agent`, in delivery order.
    pub fn inbox<'a>(&'a self, agent: &'a AgentId) -> impl Iterator<Item = &'a Message> {
        self.delivered
            .iter()
            .flat_map(|e| e.messages.iter())
            .filter(move |m| m.recipients.includes(agent))
    }
}
