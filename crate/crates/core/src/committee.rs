//! Multi-agent strategies: majority vote and peer-discussion consensus.
//!
//! Tie-breaking is deterministic everywhere: counts are tallied per label in
//! label-space order and the first maximum wins. Invalid records never carry
//! a vote; a round of only-invalid records yields an invalid majority.

use crate::methods::{annotate_cot, annotate_vanilla, one_call, CallSpec, MethodError, SessionCtx};
use crate::model::{AnnotationRecord, Instance, LabelSpace, MethodName, ParsedLabel};
use crate::prompt::{render_discussion_history, TemplateId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum CommitteeError {
    #[error("majority vote needs at least one record")]
    EmptyVote,
    #[error("committee method needs a non-empty agent roster")]
    EmptyRoster,
    #[error(transparent)]
    Method(#[from] MethodError),
}

/// Deterministic plurality over the valid labels in `records`.
///
/// Ties break toward the label that comes first in label-space order; all
/// votes invalid (or absent) yields `Invalid`. Empty input is an error.
pub fn majority_vote(
    records: &[AnnotationRecord],
    space: &LabelSpace,
) -> Result<ParsedLabel, CommitteeError> {
    if records.is_empty() {
        return Err(CommitteeError::EmptyVote);
    }
    let mut counts = vec![0u32; space.len()];
    for rec in records {
        if let Some(label) = rec.parsed_label.as_valid() {
            if let Some(i) = space.position(label) {
                counts[i] += 1;
            }
        }
    }
    let (best, votes) = counts
        .iter()
        .enumerate()
        .max_by(|(ai, av), (bi, bv)| av.cmp(bv).then(bi.cmp(ai)))
        .expect("label space is non-empty");
    if *votes == 0 {
        return Ok(ParsedLabel::Invalid);
    }
    Ok(ParsedLabel::Valid(space.labels()[best].clone()))
}

/// How a committee's final label was settled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    /// Every agent agreed on the same valid label.
    Consensus,
    /// The round cap hit and the last round was put to a plurality vote.
    Plurality,
}

/// Full trace of a committee run on one instance. `rounds[r][i]` is the
/// record of `agent_ids[i]` in round `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscussionTranscript {
    pub instance_id: String,
    pub method: MethodName,
    pub agent_ids: Vec<String>,
    pub rounds: Vec<Vec<AnnotationRecord>>,
    pub consensus_round: Option<u32>,
    pub final_label: ParsedLabel,
    pub resolved_by: Resolution,
}

fn unanimous(records: &[AnnotationRecord], space: &LabelSpace) -> Option<ParsedLabel> {
    let first = records.first()?.parsed_label.as_valid()?;
    let pos = space.position(first)?;
    for rec in &records[1..] {
        if rec.parsed_label.as_valid().and_then(|l| space.position(l)) != Some(pos) {
            return None;
        }
    }
    Some(records[0].parsed_label.clone())
}

/// Which prompt a majority-vote committee uses for its single round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoteVariant {
    Vanilla,
    Cot,
}

/// One round of independent annotations by the whole roster, settled by
/// majority vote. Unanimity is recorded as consensus at round 0.
pub fn run_majority_vote(
    ctx: &SessionCtx<'_>,
    instance: &Instance,
    variant: VoteVariant,
) -> Result<DiscussionTranscript, CommitteeError> {
    let roster = &ctx.config.agent_roster;
    if roster.is_empty() {
        return Err(CommitteeError::EmptyRoster);
    }
    let method = match variant {
        VoteVariant::Vanilla => MethodName::MajorityVoteVanilla,
        VoteVariant::Cot => MethodName::MajorityVoteCot,
    };
    let mut records = Vec::with_capacity(roster.len());
    for agent in roster {
        let outcome = match variant {
            VoteVariant::Vanilla => annotate_vanilla(ctx, instance, agent)?,
            VoteVariant::Cot => annotate_cot(ctx, instance, agent)?,
        };
        let mut record = outcome.final_record;
        record.method = method;
        records.push(record);
    }
    let space = ctx.task.label_space();
    let final_label = majority_vote(&records, space)?;
    let (consensus_round, resolved_by) = match unanimous(&records, space) {
        Some(_) => (Some(0), Resolution::Consensus),
        None => (None, Resolution::Plurality),
    };
    Ok(DiscussionTranscript {
        instance_id: instance.instance_id.clone(),
        method,
        agent_ids: roster.iter().map(|a| a.agent_id.clone()).collect(),
        rounds: vec![records],
        consensus_round,
        final_label,
        resolved_by,
    })
}

/// Peer discussion: independent CoT round, then rework rounds where each
/// agent sees the previous round's anonymized reasoning, until unanimity or
/// `max_discussion_rounds` rework rounds have run; a leftover disagreement is
/// settled by plurality over the last round.
pub fn run_peer_discussion(
    ctx: &SessionCtx<'_>,
    instance: &Instance,
) -> Result<DiscussionTranscript, CommitteeError> {
    let roster = &ctx.config.agent_roster;
    if roster.is_empty() {
        return Err(CommitteeError::EmptyRoster);
    }
    let space = ctx.task.label_space();
    let mut rounds: Vec<Vec<AnnotationRecord>> = Vec::new();

    let mut round0 = Vec::with_capacity(roster.len());
    for agent in roster {
        round0.push(one_call(
            ctx,
            instance,
            CallSpec {
                template: TemplateId::DiscussInitial,
                extras: BTreeMap::new(),
                temperature: ctx.config.greedy_temperature,
                sample_index: 0,
                method: MethodName::PeerDiscussion,
                round: 0,
                keep_reasoning: true,
                agent,
            },
        )?);
    }
    rounds.push(round0);

    loop {
        let last = rounds.last().expect("at least round 0");
        if let Some(label) = unanimous(last, space) {
            let round = rounds.len() as u32 - 1;
            return Ok(DiscussionTranscript {
                instance_id: instance.instance_id.clone(),
                method: MethodName::PeerDiscussion,
                agent_ids: roster.iter().map(|a| a.agent_id.clone()).collect(),
                rounds,
                consensus_round: Some(round),
                final_label: label,
                resolved_by: Resolution::Consensus,
            });
        }
        if rounds.len() as u32 > ctx.config.max_discussion_rounds {
            let final_label = majority_vote(last, space)?;
            return Ok(DiscussionTranscript {
                instance_id: instance.instance_id.clone(),
                method: MethodName::PeerDiscussion,
                agent_ids: roster.iter().map(|a| a.agent_id.clone()).collect(),
                rounds,
                consensus_round: None,
                final_label,
                resolved_by: Resolution::Plurality,
            });
        }
        let history = render_discussion_history(rounds.last().unwrap()).map_err(|source| {
            MethodError::Prompt { instance_id: instance.instance_id.clone(), source }
        })?;
        let round = rounds.len() as u32;
        let mut next = Vec::with_capacity(roster.len());
        for agent in roster {
            let mut extras = BTreeMap::new();
            extras.insert("discussion_history".to_string(), history.clone());
            next.push(one_call(
                ctx,
                instance,
                CallSpec {
                    template: TemplateId::DiscussRework,
                    extras,
                    temperature: ctx.config.greedy_temperature,
                    sample_index: 0,
                    method: MethodName::PeerDiscussion,
                    round,
                    keep_reasoning: true,
                    agent,
                },
            )?);
        }
        rounds.push(next);
    }
}

/// Agent labels and the majority label as of round `round`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundSnapshot {
    pub round: u32,
    /// One label per `transcript.agent_ids` entry.
    pub labels: Vec<ParsedLabel>,
    pub majority: ParsedLabel,
}

/// Per-round label snapshots with carry-forward: an instance that settled
/// early keeps its last round's labels for all later rounds, so curves over a
/// mixed population stay comparable.
pub fn marginal_round_labels(
    transcript: &DiscussionTranscript,
    space: &LabelSpace,
    rounds: u32,
) -> Vec<RoundSnapshot> {
    if transcript.rounds.is_empty() {
        return Vec::new();
    }
    let total = (rounds as usize).max(transcript.rounds.len()).max(1);
    let mut out = Vec::with_capacity(total);
    for r in 0..total {
        let src = r.min(transcript.rounds.len() - 1);
        let records = &transcript.rounds[src];
        let labels = records.iter().map(|rec| rec.parsed_label.clone()).collect();
        let majority = majority_vote(records, space).unwrap_or(ParsedLabel::Invalid);
        out.push(RoundSnapshot { round: r as u32, labels, majority });
    }
    out
}
