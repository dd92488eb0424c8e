//! Browser demo: three operations from the annotation workbench compiled to
//! WebAssembly and driven from a static page. Every call takes and returns
//! JSON strings so the page needs no bindings beyond `JSON.parse`.
//!
//! The provider is the scripted mock, so a "run" here is a pure function of
//! (task, instances, method, script) — exactly what the test suites rely on,
//! but interactive.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use labelcrew_core::committee::{run_majority_vote, run_peer_discussion, VoteVariant};
use labelcrew_core::data::parse_task_json;
use labelcrew_core::eval::{delta, mcnemar_p, paired_sign_flip_p, round1_ratio, ALPHA};
use labelcrew_core::ledger::{cost_effectiveness_table, summarize, CostPoint, MemoryLedger};
use labelcrew_core::methods::{
    annotate_cot, annotate_self_consistency, annotate_self_refine, annotate_vanilla, SessionCtx,
};
use labelcrew_core::prompt::TemplateSet;
use labelcrew_core::provider::mock::{MockProvider, MockScript};
use labelcrew_core::provider::{MemoryStore, PricingRow, PricingTable};
use labelcrew_core::{Gateway, Instance, MethodConfig, MethodName, ParsedLabel};
use rust_decimal::Decimal;
use serde::Deserialize;
use wasm_bindgen::prelude::*;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Everything a scripted run needs. `pricing` may be omitted; roster pairs
/// without a price are charged at zero.
#[derive(Deserialize)]
struct Setup {
    task: serde_json::Value,
    instances: Vec<Instance>,
    method: MethodConfig,
    script: MockScript,
    #[serde(default)]
    pricing: Vec<PricingRow>,
}

/// Run one annotation method over a small dataset against the scripted
/// provider. Returns per-instance labels, discussion transcripts for
/// committee methods, accuracy against any gold labels, and the cost ledger
/// summary.
#[wasm_bindgen]
pub fn run_annotation(setup_json: &str) -> Result<String, String> {
    let setup: Setup = serde_json::from_str(setup_json).map_err(|e| format!("bad setup: {e}"))?;
    let task = parse_task_json(&setup.task.to_string()).map_err(err)?;
    setup.method.validate().map_err(err)?;
    if setup.instances.is_empty() {
        return Err("need at least one instance".into());
    }

    let mut pricing = PricingTable::from_rows(&setup.pricing).map_err(err)?;
    for agent in &setup.method.agent_roster {
        if pricing.get(&agent.provider_id, &agent.model_id).is_err() {
            pricing
                .insert(
                    agent.provider_id.clone(),
                    agent.model_id.clone(),
                    Decimal::ZERO,
                    Decimal::ZERO,
                )
                .map_err(err)?;
        }
    }

    let mock = Arc::new(MockProvider::new(setup.script));
    let ledger = Arc::new(MemoryLedger::new());
    let mut builder = Gateway::builder()
        .pricing(pricing)
        .ledger(ledger.clone())
        // a fresh in-memory cache per run: repeated identical prompts (a
        // discussion that stops moving, self-consistency at temperature 0)
        // show up as cached calls with zero actual cost but full nominal cost
        .store(Arc::new(MemoryStore::new()))
        // wall-clock and backoff are host services; a wasm page has neither
        .clock(|| 0)
        .sleep_with(|_| {});
    let mut registered = BTreeSet::new();
    for agent in &setup.method.agent_roster {
        if registered.insert(agent.provider_id.clone()) {
            builder = builder.provider(agent.provider_id.clone(), mock.clone());
        }
    }
    let gateway = builder.build();

    let templates = TemplateSet::default();
    let ctx = SessionCtx {
        gateway: &gateway,
        templates: &templates,
        task: &task,
        config: &setup.method,
        run_id: "demo",
    };

    let mut rows = Vec::new();
    let mut transcripts = Vec::new();
    let mut predictions: BTreeMap<String, ParsedLabel> = BTreeMap::new();
    for instance in &setup.instances {
        match setup.method.method {
            MethodName::Vanilla
            | MethodName::Cot
            | MethodName::SelfConsistency
            | MethodName::SelfRefine => {
                let agent = &setup.method.agent_roster[0];
                let outcome = match setup.method.method {
                    MethodName::Vanilla => annotate_vanilla(&ctx, instance, agent),
                    MethodName::Cot => annotate_cot(&ctx, instance, agent),
                    MethodName::SelfConsistency => annotate_self_consistency(&ctx, instance, agent),
                    _ => annotate_self_refine(&ctx, instance, agent),
                }
                .map_err(err)?;
                predictions.insert(instance.instance_id.clone(), outcome.label().clone());
                rows.push(serde_json::json!({
                    "instance_id": instance.instance_id,
                    "label": outcome.label(),
                    "calls": outcome.call_count,
                }));
            }
            _ => {
                let transcript = match setup.method.method {
                    MethodName::MajorityVoteVanilla => {
                        run_majority_vote(&ctx, instance, VoteVariant::Vanilla)
                    }
                    MethodName::MajorityVoteCot => {
                        run_majority_vote(&ctx, instance, VoteVariant::Cot)
                    }
                    _ => run_peer_discussion(&ctx, instance),
                }
                .map_err(err)?;
                predictions.insert(instance.instance_id.clone(), transcript.final_label.clone());
                rows.push(serde_json::json!({
                    "instance_id": instance.instance_id,
                    "label": &transcript.final_label,
                    "calls": transcript.rounds.iter().map(|r| r.len() as u64).sum::<u64>(),
                    "rounds": transcript.rounds.len(),
                    "consensus_round": transcript.consensus_round,
                    "resolved_by": &transcript.resolved_by,
                }));
                transcripts.push(transcript);
            }
        }
    }

    let accuracy = if setup.instances.iter().any(|i| i.gold_label.is_some()) {
        Some(
            labelcrew_core::eval::score(
                "demo",
                setup.method.method,
                &predictions,
                &setup.instances,
                task.label_space(),
            )
            .map_err(err)?,
        )
    } else {
        None
    };

    let cost = summarize(&ledger.snapshot());
    let out = serde_json::json!({
        "method": setup.method.method,
        "instances": rows,
        "transcripts": transcripts,
        "accuracy": accuracy,
        "cost": cost,
        "live_calls": gateway.live_calls(),
    });
    serde_json::to_string_pretty(&out).map_err(err)
}

/// Paired significance check between two methods on the same instances.
/// Inputs are JSON arrays of booleans (correct per instance, same order).
/// Reports both the exact McNemar p-value and the sign-flip permutation
/// p-value, each judged at the suite-wide alpha.
#[wasm_bindgen]
pub fn compare_methods(
    candidate_json: &str,
    baseline_json: &str,
    resamples: u32,
    seed: u64,
) -> Result<String, String> {
    let cand: Vec<bool> =
        serde_json::from_str(candidate_json).map_err(|e| format!("bad candidate: {e}"))?;
    let base: Vec<bool> =
        serde_json::from_str(baseline_json).map_err(|e| format!("bad baseline: {e}"))?;
    if cand.len() != base.len() {
        return Err(format!(
            "length mismatch: candidate has {} outcomes, baseline {}",
            cand.len(),
            base.len()
        ));
    }
    if cand.is_empty() {
        return Err("need at least one paired outcome".into());
    }
    if resamples == 0 {
        return Err("resamples must be positive".into());
    }

    let n = cand.len() as u64;
    let candidate_only = cand.iter().zip(&base).filter(|(c, b)| **c && !**b).count() as u64;
    let baseline_only = cand.iter().zip(&base).filter(|(c, b)| !**c && **b).count() as u64;
    let diffs: Vec<i32> = cand
        .iter()
        .zip(&base)
        .map(|(c, b)| *c as i32 - *b as i32)
        .collect();

    let cand_pct = round1_ratio(cand.iter().filter(|c| **c).count() as u64, n);
    let base_pct = round1_ratio(base.iter().filter(|b| **b).count() as u64, n);
    let exact_p = mcnemar_p(candidate_only, baseline_only);
    let perm_p = paired_sign_flip_p(&diffs, resamples, seed);

    let out = serde_json::json!({
        "n": n,
        "candidate_accuracy_pct": cand_pct,
        "baseline_accuracy_pct": base_pct,
        "delta_pct": delta(cand_pct, base_pct),
        "candidate_only": candidate_only,
        "baseline_only": baseline_only,
        "mcnemar_p": exact_p,
        "permutation_p": perm_p,
        "alpha": ALPHA,
        "significant_mcnemar": exact_p < ALPHA,
        "significant_permutation": perm_p < ALPHA,
    });
    serde_json::to_string_pretty(&out).map_err(err)
}

/// One accuracy/cost point as the page supplies it. Costs are decimal
/// strings so nothing rides through f64.
#[derive(Deserialize)]
struct FrontierPoint {
    label: String,
    method: MethodName,
    accuracy_pct: f64,
    cost_usd: String,
    #[serde(default)]
    nominal_cost_usd: Option<String>,
}

/// Cost-effectiveness table: flags the points on the accuracy/cost Pareto
/// frontier. `nominal_cost_usd` defaults to the actual cost.
#[wasm_bindgen]
pub fn cost_frontier(points_json: &str) -> Result<String, String> {
    let raw: Vec<FrontierPoint> =
        serde_json::from_str(points_json).map_err(|e| format!("bad points: {e}"))?;
    if raw.is_empty() {
        return Err("need at least one point".into());
    }
    let mut points = Vec::with_capacity(raw.len());
    for p in raw {
        let cost: Decimal = p
            .cost_usd
            .trim()
            .parse()
            .map_err(|e| format!("bad cost for {}: {e}", p.label))?;
        let nominal = match &p.nominal_cost_usd {
            Some(s) => s
                .trim()
                .parse()
                .map_err(|e| format!("bad nominal cost for {}: {e}", p.label))?,
            None => cost,
        };
        points.push(CostPoint {
            label: p.label,
            method: p.method,
            accuracy_pct: p.accuracy_pct,
            cost_usd: cost,
            nominal_cost_usd: nominal,
        });
    }
    let rows = cost_effectiveness_table(points);
    serde_json::to_string_pretty(&rows).map_err(err)
}
