//! Single-agent annotation strategies: vanilla, chain-of-thought,
//! self-consistency, self-refine.
//!
//! Call-count shapes are part of the contract: vanilla and CoT spend one
//! request per instance, self-consistency spends `sc_samples`, self-refine
//! spends exactly three (generate, review, refine). Every request flows
//! through the gateway, so caching and cost accounting come for free.

use crate::committee::majority_vote;
use crate::model::{AgentSpec, AnnotationRecord, AnnotationTask, Instance, MethodConfig, MethodName, ParsedLabel};
use crate::prompt::{extract_label, render, PromptError, TemplateId, TemplateSet};
use crate::provider::{CallContext, ChatRequest, Gateway, ProviderError, TokenUsage};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum MethodError {
    #[error("prompt for instance {instance_id:?}: {source}")]
    Prompt {
        instance_id: String,
        #[source]
        source: PromptError,
    },
    #[error("provider call for instance {instance_id:?} agent {agent_id:?}: {source}")]
    Provider {
        instance_id: String,
        agent_id: String,
        #[source]
        source: ProviderError,
    },
    #[error("majority vote needs at least one record")]
    EmptyVote,
}

/// Shared context for running one method over instances.
pub struct SessionCtx<'a> {
    pub gateway: &'a Gateway,
    pub templates: &'a TemplateSet,
    pub task: &'a AnnotationTask,
    pub config: &'a MethodConfig,
    pub run_id: &'a str,
}

/// What one strategy produced for one instance: the record that carries the
/// final label, any intermediate records (drafts, reviews, extra samples),
/// and how many requests were issued.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodOutcome {
    pub final_record: AnnotationRecord,
    pub intermediates: Vec<AnnotationRecord>,
    pub call_count: u32,
}

impl MethodOutcome {
    pub fn label(&self) -> &ParsedLabel {
        &self.final_record.parsed_label
    }
}

pub(crate) struct CallSpec<'a> {
    pub template: TemplateId,
    pub extras: BTreeMap<String, String>,
    pub temperature: f64,
    pub sample_index: u32,
    pub method: MethodName,
    pub round: u32,
    pub keep_reasoning: bool,
    pub agent: &'a AgentSpec,
}

/// Render, call, extract: the one code path every strategy shares.
pub(crate) fn one_call(
    ctx: &SessionCtx<'_>,
    instance: &Instance,
    spec: CallSpec<'_>,
) -> Result<AnnotationRecord, MethodError> {
    let messages = render(ctx.templates, spec.template, ctx.task, instance, &spec.extras)
        .map_err(|source| MethodError::Prompt {
            instance_id: instance.instance_id.clone(),
            source,
        })?;
    let request = ChatRequest {
        provider_id: spec.agent.provider_id.clone(),
        model_id: spec.agent.model_id.clone(),
        messages,
        temperature: spec.temperature,
        sample_index: spec.sample_index,
        max_output_tokens: ctx.config.max_output_tokens,
    };
    let call_ctx = CallContext {
        run_id: ctx.run_id.to_string(),
        instance_id: instance.instance_id.clone(),
        agent_id: spec.agent.agent_id.clone(),
        method: spec.method,
        round: spec.round,
        template: spec.template,
    };
    let response = ctx.gateway.complete(&request, &call_ctx).map_err(|source| {
        MethodError::Provider {
            instance_id: instance.instance_id.clone(),
            agent_id: spec.agent.agent_id.clone(),
            source,
        }
    })?;
    let (parsed_label, reasoning) = extract_label(&response.text, ctx.task.label_space());
    Ok(AnnotationRecord {
        instance_id: instance.instance_id.clone(),
        agent_id: spec.agent.agent_id.clone(),
        method: spec.method,
        round: spec.round,
        sample_index: spec.sample_index,
        raw_output: response.text,
        parsed_label,
        reasoning: spec.keep_reasoning.then_some(reasoning).filter(|r| !r.is_empty()),
        usage: response.usage,
    })
}

fn sum_usage(records: &[AnnotationRecord]) -> TokenUsage {
    records.iter().fold(TokenUsage::default(), |acc, r| acc + r.usage)
}

/// One greedy call with the plain template.
pub fn annotate_vanilla(
    ctx: &SessionCtx<'_>,
    instance: &Instance,
    agent: &AgentSpec,
) -> Result<MethodOutcome, MethodError> {
    let record = one_call(
        ctx,
        instance,
        CallSpec {
            template: TemplateId::Vanilla,
            extras: BTreeMap::new(),
            temperature: ctx.config.greedy_temperature,
            sample_index: 0,
            method: MethodName::Vanilla,
            round: 0,
            keep_reasoning: false,
            agent,
        },
    )?;
    Ok(MethodOutcome { final_record: record, intermediates: Vec::new(), call_count: 1 })
}

/// One greedy call with the step-by-step template; reasoning is kept.
pub fn annotate_cot(
    ctx: &SessionCtx<'_>,
    instance: &Instance,
    agent: &AgentSpec,
) -> Result<MethodOutcome, MethodError> {
    let record = one_call(
        ctx,
        instance,
        CallSpec {
            template: TemplateId::Cot,
            extras: BTreeMap::new(),
            temperature: ctx.config.greedy_temperature,
            sample_index: 0,
            method: MethodName::Cot,
            round: 0,
            keep_reasoning: true,
            agent,
        },
    )?;
    Ok(MethodOutcome { final_record: record, intermediates: Vec::new(), call_count: 1 })
}

/// `sc_samples` sampled CoT calls, aggregated by majority vote.
///
/// The winning label is attached to a synthetic final record whose usage sums
/// all samples; the samples themselves ride along as intermediates (sample 0
/// first, in order).
pub fn annotate_self_consistency(
    ctx: &SessionCtx<'_>,
    instance: &Instance,
    agent: &AgentSpec,
) -> Result<MethodOutcome, MethodError> {
    let n = ctx.config.sc_samples;
    let mut samples = Vec::with_capacity(n as usize);
    for sample_index in 0..n {
        samples.push(one_call(
            ctx,
            instance,
            CallSpec {
                template: TemplateId::Cot,
                extras: BTreeMap::new(),
                temperature: ctx.config.sc_temperature,
                sample_index,
                method: MethodName::SelfConsistency,
                round: 0,
                keep_reasoning: true,
                agent,
            },
        )?);
    }
    let winner =
        majority_vote(&samples, ctx.task.label_space()).map_err(|_| MethodError::EmptyVote)?;
    let final_record = AnnotationRecord {
        instance_id: instance.instance_id.clone(),
        agent_id: agent.agent_id.clone(),
        method: MethodName::SelfConsistency,
        round: 0,
        sample_index: 0,
        raw_output: String::new(),
        parsed_label: winner,
        reasoning: None,
        usage: sum_usage(&samples),
    };
    Ok(MethodOutcome { final_record, intermediates: samples, call_count: n })
}

/// Generate, review, refine: three greedy calls by the same agent, each fed
/// the previous step's raw output. The refined record carries the label.
pub fn annotate_self_refine(
    ctx: &SessionCtx<'_>,
    instance: &Instance,
    agent: &AgentSpec,
) -> Result<MethodOutcome, MethodError> {
    let greedy = ctx.config.greedy_temperature;
    let draft = one_call(
        ctx,
        instance,
        CallSpec {
            template: TemplateId::RefineGenerate,
            extras: BTreeMap::new(),
            temperature: greedy,
            sample_index: 0,
            method: MethodName::SelfRefine,
            round: 0,
            keep_reasoning: true,
            agent,
        },
    )?;
    let mut review_extras = BTreeMap::new();
    review_extras.insert("draft".to_string(), draft.raw_output.clone());
    let review = one_call(
        ctx,
        instance,
        CallSpec {
            template: TemplateId::RefineReview,
            extras: review_extras,
            temperature: greedy,
            sample_index: 0,
            method: MethodName::SelfRefine,
            round: 0,
            keep_reasoning: true,
            agent,
        },
    )?;
    let mut refine_extras = BTreeMap::new();
    refine_extras.insert("draft".to_string(), draft.raw_output.clone());
    refine_extras.insert("feedback".to_string(), review.raw_output.clone());
    let refined = one_call(
        ctx,
        instance,
        CallSpec {
            template: TemplateId::RefineRefine,
            extras: refine_extras,
            temperature: greedy,
            sample_index: 0,
            method: MethodName::SelfRefine,
            round: 0,
            keep_reasoning: true,
            agent,
        },
    )?;
    Ok(MethodOutcome {
        final_record: refined,
        intermediates: vec![draft, review],
        call_count: 3,
    })
}
