//! Reversible multi-agent reasoning for multi-hop question answering.
//!
//! The crate is `no_std` with `alloc`. File formats, HTTP and the CLI live in
//! the companion `revqa` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod agents;
pub mod bus;
pub mod engine;
pub mod evalkit;
pub mod journal;
pub mod kstore;
pub mod retrieval;

pub use bus::{Bus, CompositeEvent, Message, MessageKind, Payload, Recipients};
pub use journal::{Checkpoint, Journal, JournalEntry, LiveState, Outcome, Timeline};
pub use kstore::{AgentId, Assertion, KnowledgeSet, Polarity, PredicateRegistry, Scope};
