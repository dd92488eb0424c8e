//! Per-call cost accounting and cost-effectiveness reporting.
//!
//! Every answered gateway request appends exactly one entry. Cached calls
//! cost zero but keep a nominal cost (what the call would have cost live) so
//! replayed runs can still report meaningful totals.

use crate::model::MethodName;
use crate::provider::TokenUsage;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Mutex;

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("ledger sink io: {0}")]
    Io(String),
}

/// One model call's accounting row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub run_id: String,
    pub instance_id: String,
    pub agent_id: String,
    pub method: MethodName,
    pub round: u32,
    pub sample_index: u32,
    pub provider_id: String,
    pub model_id: String,
    pub usage: TokenUsage,
    /// What the call actually cost (zero when served from cache).
    pub cost_usd: Decimal,
    /// What the call would cost live; equals `cost_usd` for uncached calls.
    pub nominal_cost_usd: Decimal,
    pub cached: bool,
    pub retries: u32,
    pub timestamp_ms: u64,
}

/// Destination for ledger entries (in-memory buffer, JSONL file, ...).
pub trait LedgerSink: Send + Sync {
    fn append(&self, entry: &LedgerEntry) -> Result<(), LedgerError>;
}

/// Buffering sink for tests, replays, and the browser demo.
#[derive(Default)]
pub struct MemoryLedger {
    entries: Mutex<Vec<LedgerEntry>>,
}

impl MemoryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot(&self) -> Vec<LedgerEntry> {
        self.entries.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl LedgerSink for MemoryLedger {
    fn append(&self, entry: &LedgerEntry) -> Result<(), LedgerError> {
        self.entries.lock().unwrap().push(entry.clone());
        Ok(())
    }
}

/// Aggregated run costs, exact to the cent and far beyond.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostSummary {
    pub total_usd: Decimal,
    pub nominal_total_usd: Decimal,
    pub by_instance: BTreeMap<String, Decimal>,
    pub nominal_by_instance: BTreeMap<String, Decimal>,
    pub instances: u64,
    pub calls: u64,
    pub cached_calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl CostSummary {
    /// Mean actual cost per instance (zero instances yields zero).
    pub fn mean_per_instance(&self) -> Decimal {
        if self.instances == 0 {
            Decimal::ZERO
        } else {
            self.total_usd / Decimal::from(self.instances)
        }
    }

    pub fn nominal_mean_per_instance(&self) -> Decimal {
        if self.instances == 0 {
            Decimal::ZERO
        } else {
            self.nominal_total_usd / Decimal::from(self.instances)
        }
    }
}

/// Fold entries into per-instance and total cost. Sums are plain decimal
/// additions of exact per-call costs, so the total equals the sum of parts.
pub fn summarize(entries: &[LedgerEntry]) -> CostSummary {
    let mut by_instance: BTreeMap<String, Decimal> = BTreeMap::new();
    let mut nominal_by_instance: BTreeMap<String, Decimal> = BTreeMap::new();
    let mut total = Decimal::ZERO;
    let mut nominal_total = Decimal::ZERO;
    let mut cached_calls = 0u64;
    let mut input_tokens = 0u64;
    let mut output_tokens = 0u64;
    for e in entries {
        total += e.cost_usd;
        nominal_total += e.nominal_cost_usd;
        *by_instance.entry(e.instance_id.clone()).or_default() += e.cost_usd;
        *nominal_by_instance.entry(e.instance_id.clone()).or_default() += e.nominal_cost_usd;
        if e.cached {
            cached_calls += 1;
        }
        input_tokens += e.usage.input_tokens;
        output_tokens += e.usage.output_tokens;
    }
    CostSummary {
        total_usd: total,
        nominal_total_usd: nominal_total,
        instances: by_instance.len() as u64,
        calls: entries.len() as u64,
        cached_calls,
        input_tokens,
        output_tokens,
        by_instance,
        nominal_by_instance,
    }
}

/// One candidate point for the accuracy-versus-cost table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostPoint {
    /// Display key, e.g. `run_id` or `method@dataset`.
    pub label: String,
    pub method: MethodName,
    pub accuracy_pct: f64,
    pub cost_usd: Decimal,
    pub nominal_cost_usd: Decimal,
}

/// A cost point plus its Pareto verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostTableRow {
    #[serde(flatten)]
    pub point: CostPoint,
    pub pareto: bool,
}

/// Mark each point Pareto-efficient or dominated, sorted by accuracy
/// descending (nominal cost ascending breaks ties).
///
/// A point is dominated when some other point has cost <= and accuracy >= with
/// at least one strict inequality; dominance runs on nominal cost so replayed
/// (zero-cost) runs compare like live ones. Equal-cost equal-accuracy
/// duplicates are all kept efficient.
pub fn cost_effectiveness_table(points: Vec<CostPoint>) -> Vec<CostTableRow> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[b]
            .accuracy_pct
            .partial_cmp(&points[a].accuracy_pct)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(points[a].nominal_cost_usd.cmp(&points[b].nominal_cost_usd))
            .then(points[a].label.cmp(&points[b].label))
    });
    let mut rows: Vec<CostTableRow> = Vec::with_capacity(points.len());
    let mut min_cost: Option<Decimal> = None;
    let mut acc_at_min = f64::NEG_INFINITY;
    for idx in order {
        let p = points[idx].clone();
        let pareto = match min_cost {
            None => true,
            Some(c) => {
                p.nominal_cost_usd < c || (p.nominal_cost_usd == c && p.accuracy_pct == acc_at_min)
            }
        };
        if min_cost.map_or(true, |c| p.nominal_cost_usd < c) {
            min_cost = Some(p.nominal_cost_usd);
            acc_at_min = p.accuracy_pct;
        }
        rows.push(CostTableRow { point: p, pareto });
    }
    rows
}

/// Cost-effectiveness table as RFC-4180 CSV. Money columns are exact decimal
/// strings, never floats.
pub fn write_cost_csv<W: std::io::Write>(
    rows: &[CostTableRow],
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "method", "accuracy_pct", "cost_usd", "nominal_cost_usd", "pareto"])?;
    for row in rows {
        w.write_record([
            row.point.label.clone(),
            row.point.method.to_string(),
            format!("{:.1}", row.point.accuracy_pct),
            row.point.cost_usd.to_string(),
            row.point.nominal_cost_usd.to_string(),
            row.pareto.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
