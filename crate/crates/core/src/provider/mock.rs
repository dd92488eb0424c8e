//! Scripted mock provider: deterministic replies keyed on call provenance.
//!
//! Scripts are plain data (JSON-friendly) so offline runs, tests, and the
//! browser demo can all drive the full pipeline without a network. A rule
//! matches on any subset of (agent, instance, round, sample, template); the
//! first matching rule wins, then the script's default reply, and a call that
//! matches nothing fails the run loudly.

use super::{mock_usage, CallContext, ChatProvider, ChatRequest, ProviderError, ProviderReply};
use crate::prompt::TemplateId;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};

/// One scripted reply. `None` fields are wildcards.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_index: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<TemplateId>,
    pub reply: String,
}

impl MockRule {
    pub fn new(reply: impl Into<String>) -> Self {
        Self {
            agent_id: None,
            instance_id: None,
            round: None,
            sample_index: None,
            template: None,
            reply: reply.into(),
        }
    }

    pub fn for_agent(mut self, agent_id: impl Into<String>) -> Self {
        self.agent_id = Some(agent_id.into());
        self
    }

    pub fn for_instance(mut self, instance_id: impl Into<String>) -> Self {
        self.instance_id = Some(instance_id.into());
        self
    }

    pub fn at_round(mut self, round: u32) -> Self {
        self.round = Some(round);
        self
    }

    pub fn at_sample(mut self, sample_index: u32) -> Self {
        self.sample_index = Some(sample_index);
        self
    }

    pub fn for_template(mut self, template: TemplateId) -> Self {
        self.template = Some(template);
        self
    }

    fn matches(&self, ctx: &CallContext, sample_index: u32) -> bool {
        self.agent_id.as_deref().map_or(true, |a| a == ctx.agent_id)
            && self.instance_id.as_deref().map_or(true, |i| i == ctx.instance_id)
            && self.round.map_or(true, |r| r == ctx.round)
            && self.sample_index.map_or(true, |s| s == sample_index)
            && self.template.map_or(true, |t| t == ctx.template)
    }
}

/// An ordered rule list plus an optional catch-all reply.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_reply: Option<String>,
}

impl MockScript {
    /// Script that answers every call with the same text.
    pub fn always(reply: impl Into<String>) -> Self {
        Self { rules: Vec::new(), default_reply: Some(reply.into()) }
    }

    pub fn with_rule(mut self, rule: MockRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn from_json_str(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// First matching rule's reply, else the default.
    pub fn lookup(&self, ctx: &CallContext, sample_index: u32) -> Option<&str> {
        self.rules
            .iter()
            .find(|r| r.matches(ctx, sample_index))
            .map(|r| r.reply.as_str())
            .or(self.default_reply.as_deref())
    }
}

/// Provider backend that replays a [`MockScript`]. Token usage follows the
/// whitespace convention: input counts every message, output counts the reply.
pub struct MockProvider {
    script: MockScript,
    calls: AtomicU64,
}

impl MockProvider {
    pub fn new(script: MockScript) -> Self {
        Self { script, calls: AtomicU64::new(0) }
    }

    /// Calls that reached this backend (cache hits never do).
    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatProvider for MockProvider {
    fn complete(&self, req: &ChatRequest, ctx: &CallContext) -> Result<ProviderReply, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let Some(reply) = self.script.lookup(ctx, req.sample_index) else {
            return Err(ProviderError::ScriptMiss {
                agent_id: ctx.agent_id.clone(),
                instance_id: ctx.instance_id.clone(),
                round: ctx.round,
                sample_index: req.sample_index,
            });
        };
        Ok(ProviderReply {
            text: reply.to_string(),
            usage: mock_usage(&req.messages, reply),
        })
    }
}
