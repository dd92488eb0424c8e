//! Annotation strategies, committee protocols, evaluation, and cost accounting
//! for LLM annotation runs.
//!
//! The crate is organized around the run pipeline:
//!
//! - [`model`]: label spaces, tasks, instances, records, and method configuration
//! - [`provider`]: the chat-completion gateway, response caching, pricing, and
//!   the scripted mock provider used for offline runs and tests
//! - [`prompt`]: prompt templates with named slots, label extraction, and
//!   discussion-history rendering
//! - [`methods`]: the single-agent strategies (vanilla, chain-of-thought,
//!   self-consistency, self-refine)
//! - [`committee`]: multi-agent majority vote and the peer-discussion
//!   consensus protocol
//! - [`eval`]: accuracy scoring, significance tests, and per-round curves
//! - [`ledger`]: per-call cost accounting and cost-effectiveness tables
//!
//! Everything in this crate is deterministic given its inputs: with the mock
//! provider, a run is a pure function of (dataset, config, script). Disk and
//! network backends live in the companion CLI crate.

pub mod committee;
pub mod data;
pub mod eval;
pub mod ledger;
pub mod methods;
pub mod model;
pub mod prompt;
pub mod provider;

pub use model::{
    AgentSpec, AnnotationRecord, AnnotationTask, Instance, LabelSpace, MethodConfig, MethodName,
    ParsedLabel, ValidationReport, Violation,
};
pub use provider::{ChatMessage, ChatRequest, ChatResponse, Gateway, Role, TokenUsage};
