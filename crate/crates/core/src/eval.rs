//! Accuracy scoring, paired significance tests, summary tables, round curves.
//!
//! All reported percentages are rounded to one decimal, half away from zero,
//! and row averages are computed over those rounded values (integer tenths
//! under the hood, so ties never wobble with float noise).

use crate::committee::{marginal_round_labels, DiscussionTranscript};
use crate::model::{Instance, LabelSpace, MethodName, ParsedLabel};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no gold-labeled instances to score")]
    NoGold,
    #[error("no prediction for gold instance {0:?}")]
    MissingPrediction(String),
    #[error("prediction references unknown instance {0:?}")]
    UnknownInstance(String),
    #[error("gold label {gold:?} for instance {instance_id:?} is outside the label space")]
    GoldOutsideSpace { instance_id: String, gold: String },
    #[error("paired test requires identical instance sets; {0:?} is unmatched")]
    UnpairedInstance(String),
    #[error("no discussion transcript for gold instance {0:?}")]
    MissingTranscript(String),
    #[error("transcript instance {0:?} has no gold label")]
    TranscriptWithoutGold(String),
    #[error("transcripts disagree on the agent roster")]
    RosterMismatch,
    #[error("csv write failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// Percentage `100*num/den` rounded to one decimal, half away from zero.
pub fn round1_ratio(num: u64, den: u64) -> f64 {
    assert!(den > 0, "round1_ratio needs a non-empty denominator");
    let scaled = (num as u128) * 1000;
    let den = den as u128;
    let q = scaled / den;
    let r = scaled % den;
    let tenths = if 2 * r >= den { q + 1 } else { q };
    tenths as f64 / 10.0
}

fn to_tenths(v: f64) -> i64 {
    (v * 10.0).round() as i64
}

/// Mean of one-decimal percentages, itself rounded to one decimal half away
/// from zero. Matches how summary-table row averages are conventionally done.
pub fn row_average(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "row_average needs at least one value");
    let sum: i64 = values.iter().map(|v| to_tenths(*v)).sum();
    let n = values.len() as i64;
    let q = sum / n;
    let r = sum % n;
    let tenths = if 2 * r.abs() >= n { q + r.signum() } else { q };
    tenths as f64 / 10.0
}

/// Difference of two one-decimal percentages, exact in tenths.
pub fn delta(value: f64, baseline: f64) -> f64 {
    (to_tenths(value) - to_tenths(baseline)) as f64 / 10.0
}

/// One scored instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerInstance {
    pub instance_id: String,
    pub predicted: ParsedLabel,
    pub gold: String,
    pub correct: bool,
}

/// Accuracy over the gold-labeled slice of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub dataset_id: String,
    pub method: MethodName,
    pub n: u64,
    pub correct: u64,
    pub invalid: u64,
    pub accuracy_pct: f64,
    pub per_instance: Vec<PerInstance>,
}

/// Score predictions against gold labels.
///
/// Only instances carrying a gold label are scored; every one of them must
/// have a prediction. Predictions for unknown instance ids are an error,
/// predictions for known-but-unlabeled instances are ignored. An invalid
/// prediction is never correct but still counts toward `n`.
pub fn score(
    dataset_id: impl Into<String>,
    method: MethodName,
    predictions: &BTreeMap<String, ParsedLabel>,
    instances: &[Instance],
    space: &LabelSpace,
) -> Result<EvalResult, EvalError> {
    for id in predictions.keys() {
        if !instances.iter().any(|i| &i.instance_id == id) {
            return Err(EvalError::UnknownInstance(id.clone()));
        }
    }
    let mut per_instance = Vec::new();
    let mut correct = 0u64;
    let mut invalid = 0u64;
    for inst in instances {
        let Some(gold) = &inst.gold_label else { continue };
        let gold_pos = space.position(gold).ok_or_else(|| EvalError::GoldOutsideSpace {
            instance_id: inst.instance_id.clone(),
            gold: gold.clone(),
        })?;
        let predicted = predictions
            .get(&inst.instance_id)
            .ok_or_else(|| EvalError::MissingPrediction(inst.instance_id.clone()))?
            .clone();
        let ok = match &predicted {
            ParsedLabel::Valid(l) => space.position(l) == Some(gold_pos),
            ParsedLabel::Invalid => {
                invalid += 1;
                false
            }
        };
        if ok {
            correct += 1;
        }
        per_instance.push(PerInstance {
            instance_id: inst.instance_id.clone(),
            predicted,
            gold: gold.clone(),
            correct: ok,
        });
    }
    if per_instance.is_empty() {
        return Err(EvalError::NoGold);
    }
    Ok(EvalResult {
        dataset_id: dataset_id.into(),
        method,
        n: per_instance.len() as u64,
        correct,
        invalid,
        accuracy_pct: round1_ratio(correct, per_instance.len() as u64),
        per_instance,
    })
}

/// Which paired test produced a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    McnemarExact,
    PairedPermutation,
}

/// Significance threshold used for the `significant` flag.
pub const ALPHA: f64 = 0.05;

/// Paired comparison of a candidate run against a baseline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub kind: TestKind,
    /// Instances only the candidate got right.
    pub candidate_only: u64,
    /// Instances only the baseline got right.
    pub baseline_only: u64,
    pub p_value: f64,
    /// `p_value < 0.05`, the threshold the reports use.
    pub significant: bool,
}

impl PairedTest {
    fn new(kind: TestKind, candidate_only: u64, baseline_only: u64, p_value: f64) -> Self {
        Self { kind, candidate_only, baseline_only, p_value, significant: p_value < ALPHA }
    }
}

/// A paired test with the two sides named, as reported to users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceVerdict {
    pub method_a: String,
    pub method_b: String,
    pub test: TestKind,
    pub p_value: f64,
    pub significant: bool,
    /// (a-only-correct, b-only-correct) discordant counts.
    pub discordant_counts: (u64, u64),
}

impl SignificanceVerdict {
    pub fn from_test(method_a: impl Into<String>, method_b: impl Into<String>, t: &PairedTest) -> Self {
        Self {
            method_a: method_a.into(),
            method_b: method_b.into(),
            test: t.kind,
            p_value: t.p_value,
            significant: t.significant,
            discordant_counts: (t.candidate_only, t.baseline_only),
        }
    }
}

/// Align two runs' per-instance correctness by instance id.
fn paired_outcomes(a: &EvalResult, b: &EvalResult) -> Result<Vec<(bool, bool)>, EvalError> {
    let b_map: BTreeMap<&str, bool> = b
        .per_instance
        .iter()
        .map(|p| (p.instance_id.as_str(), p.correct))
        .collect();
    if a.per_instance.len() != b_map.len() {
        let a_ids: std::collections::BTreeSet<&str> =
            a.per_instance.iter().map(|p| p.instance_id.as_str()).collect();
        let missing = b_map
            .keys()
            .find(|k| !a_ids.contains(**k))
            .map(|k| (*k).to_string())
            .unwrap_or_default();
        return Err(EvalError::UnpairedInstance(missing));
    }
    a.per_instance
        .iter()
        .map(|p| {
            b_map
                .get(p.instance_id.as_str())
                .map(|bc| (p.correct, *bc))
                .ok_or_else(|| EvalError::UnpairedInstance(p.instance_id.clone()))
        })
        .collect()
}

/// Exact two-sided McNemar p-value from the discordant counts.
///
/// With `n = b + c` discordant pairs, the null distribution of either count is
/// Binomial(n, 1/2); the p-value sums both tails at and beyond the observed
/// split, clamped to 1. Zero discordant pairs give p = 1.
pub fn mcnemar_p(candidate_only: u64, baseline_only: u64) -> f64 {
    let n = candidate_only + baseline_only;
    if n == 0 {
        return 1.0;
    }
    let lo = candidate_only.min(baseline_only);
    let hi = candidate_only.max(baseline_only);
    let p = if n <= 120 {
        // exact integer route: tail sums of C(n, k) over 2^n
        let mut row = vec![0u128; n as usize + 1];
        row[0] = 1;
        for k in 1..=n as usize {
            row[k] = row[k - 1] * (n as u128 - k as u128 + 1) / k as u128;
        }
        let lo_sum: u128 = row[..=lo as usize].iter().sum();
        let hi_sum: u128 = row[hi as usize..].iter().sum();
        (lo_sum as f64 + hi_sum as f64) / (n as f64).exp2()
    } else {
        // log-space tails for large n
        let ln_fact: Vec<f64> = std::iter::once(0.0)
            .chain((1..=n).scan(0.0, |acc, k| {
                *acc += (k as f64).ln();
                Some(*acc)
            }))
            .collect();
        let ln_choose = |k: u64| ln_fact[n as usize] - ln_fact[k as usize] - ln_fact[(n - k) as usize];
        let ln2n = n as f64 * std::f64::consts::LN_2;
        let tail: f64 = (0..=lo).map(|k| (ln_choose(k) - ln2n).exp()).sum::<f64>()
            + (hi..=n).map(|k| (ln_choose(k) - ln2n).exp()).sum::<f64>();
        tail
    };
    p.min(1.0)
}

/// Exact McNemar test between two runs over the same instances.
pub fn mcnemar_test(candidate: &EvalResult, baseline: &EvalResult) -> Result<PairedTest, EvalError> {
    let pairs = paired_outcomes(candidate, baseline)?;
    let candidate_only = pairs.iter().filter(|(a, b)| *a && !*b).count() as u64;
    let baseline_only = pairs.iter().filter(|(a, b)| !*a && *b).count() as u64;
    Ok(PairedTest::new(
        TestKind::McnemarExact,
        candidate_only,
        baseline_only,
        mcnemar_p(candidate_only, baseline_only),
    ))
}

/// Two-sided paired sign-flip permutation p-value over integer differences.
///
/// Resamples flip the sign of each per-instance difference independently; the
/// p-value is `(hits + 1) / (resamples + 1)` where a hit is a resampled
/// absolute difference sum at least as large as the observed one. Seeded, so
/// identical inputs give identical p-values.
pub fn paired_sign_flip_p(diffs: &[i32], resamples: u32, seed: u64) -> f64 {
    let obs: i64 = diffs.iter().map(|d| *d as i64).sum::<i64>().abs();
    let nonzero: Vec<i64> = diffs.iter().filter(|d| **d != 0).map(|d| *d as i64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..resamples {
        let mut sum = 0i64;
        let mut bits = 0u64;
        let mut avail = 0u32;
        for d in &nonzero {
            if avail == 0 {
                bits = rng.next_u64();
                avail = 64;
            }
            sum += if bits & 1 == 1 { *d } else { -*d };
            bits >>= 1;
            avail -= 1;
        }
        if sum.abs() >= obs {
            hits += 1;
        }
    }
    (hits as f64 + 1.0) / (resamples as f64 + 1.0)
}

pub const DEFAULT_PERMUTATION_RESAMPLES: u32 = 100_000;

/// Paired permutation test between two runs (used where sampling noise makes
/// the McNemar independence story shaky, e.g. self-consistency runs).
pub fn permutation_test(
    candidate: &EvalResult,
    baseline: &EvalResult,
    resamples: u32,
    seed: u64,
) -> Result<PairedTest, EvalError> {
    let pairs = paired_outcomes(candidate, baseline)?;
    let diffs: Vec<i32> = pairs.iter().map(|(a, b)| *a as i32 - *b as i32).collect();
    let candidate_only = pairs.iter().filter(|(a, b)| *a && !*b).count() as u64;
    let baseline_only = pairs.iter().filter(|(a, b)| !*a && *b).count() as u64;
    Ok(PairedTest::new(
        TestKind::PairedPermutation,
        candidate_only,
        baseline_only,
        paired_sign_flip_p(&diffs, resamples, seed),
    ))
}

/// One accuracy series across discussion rounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundSeries {
    pub name: String,
    pub accuracy_by_round: Vec<f64>,
}

/// Per-agent and majority-vote accuracy after each discussion round, with
/// settled instances carrying their labels forward.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundCurves {
    pub rounds: u32,
    pub series: Vec<RoundSeries>,
}

pub const MAJORITY_SERIES: &str = "majority_vote";

/// Build Fig-4-style round curves from peer-discussion transcripts.
///
/// Transcripts must cover exactly the gold-labeled instances and share one
/// roster. `min_rounds` pads short runs (consensus before the cap) by carrying
/// settled labels forward; the curve always spans at least the longest
/// transcript.
pub fn round_curves(
    transcripts: &[DiscussionTranscript],
    instances: &[Instance],
    space: &LabelSpace,
    min_rounds: u32,
) -> Result<RoundCurves, EvalError> {
    let gold: BTreeMap<&str, &str> = instances
        .iter()
        .filter_map(|i| i.gold_label.as_deref().map(|g| (i.instance_id.as_str(), g)))
        .collect();
    if gold.is_empty() {
        return Err(EvalError::NoGold);
    }
    let by_id: BTreeMap<&str, &DiscussionTranscript> =
        transcripts.iter().map(|t| (t.instance_id.as_str(), t)).collect();
    for id in gold.keys() {
        if !by_id.contains_key(id) {
            return Err(EvalError::MissingTranscript((*id).to_string()));
        }
    }
    for t in transcripts {
        if !gold.contains_key(t.instance_id.as_str()) {
            return Err(EvalError::TranscriptWithoutGold(t.instance_id.clone()));
        }
    }
    let roster = &transcripts[0].agent_ids;
    if transcripts.iter().any(|t| &t.agent_ids != roster) {
        return Err(EvalError::RosterMismatch);
    }

    let longest = transcripts.iter().map(|t| t.rounds.len() as u32).max().unwrap_or(1);
    let rounds = min_rounds.max(longest).max(1);

    let n = gold.len() as u64;
    let mut agent_correct = vec![vec![0u64; rounds as usize]; roster.len()];
    let mut majority_correct = vec![0u64; rounds as usize];
    for (id, gold_label) in &gold {
        let t = by_id[id];
        let gold_pos = space.position(gold_label).ok_or_else(|| EvalError::GoldOutsideSpace {
            instance_id: (*id).to_string(),
            gold: (*gold_label).to_string(),
        })?;
        let marginal = marginal_round_labels(t, space, rounds);
        for (r, snapshot) in marginal.iter().enumerate() {
            for (a, label) in snapshot.labels.iter().enumerate() {
                if label.as_valid().and_then(|l| space.position(l)) == Some(gold_pos) {
                    agent_correct[a][r] += 1;
                }
            }
            if snapshot.majority.as_valid().and_then(|l| space.position(l)) == Some(gold_pos) {
                majority_correct[r] += 1;
            }
        }
    }

    let mut series: Vec<RoundSeries> = roster
        .iter()
        .enumerate()
        .map(|(a, id)| RoundSeries {
            name: id.clone(),
            accuracy_by_round: agent_correct[a].iter().map(|c| round1_ratio(*c, n)).collect(),
        })
        .collect();
    series.push(RoundSeries {
        name: MAJORITY_SERIES.to_string(),
        accuracy_by_round: majority_correct.iter().map(|c| round1_ratio(*c, n)).collect(),
    });
    Ok(RoundCurves { rounds, series })
}

/// One row of the evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub run_id: String,
    pub dataset_id: String,
    pub method: MethodName,
    pub n: u64,
    pub correct: u64,
    pub invalid: u64,
    pub accuracy_pct: f64,
    pub delta_pct: Option<f64>,
    pub test: Option<PairedTest>,
}

/// RFC-4180 CSV with one row per evaluated run; comparison columns are empty
/// for the baseline row and for runs on other datasets.
pub fn write_results_csv<W: io::Write>(rows: &[EvalRow], out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "run_id",
        "dataset_id",
        "method",
        "n",
        "correct",
        "invalid",
        "accuracy_pct",
        "delta_pct",
        "test",
        "candidate_only",
        "baseline_only",
        "p_value",
        "significant",
    ])?;
    for row in rows {
        let (test, cand, base, p, sig) = match &row.test {
            Some(t) => (
                match t.kind {
                    TestKind::McnemarExact => "mcnemar_exact".to_string(),
                    TestKind::PairedPermutation => "paired_permutation".to_string(),
                },
                t.candidate_only.to_string(),
                t.baseline_only.to_string(),
                format!("{}", t.p_value),
                t.significant.to_string(),
            ),
            None => Default::default(),
        };
        w.write_record([
            row.run_id.clone(),
            row.dataset_id.clone(),
            row.method.to_string(),
            row.n.to_string(),
            row.correct.to_string(),
            row.invalid.to_string(),
            format!("{:.1}", row.accuracy_pct),
            row.delta_pct.map(|d| format!("{d:.1}")).unwrap_or_default(),
            test,
            cand,
            base,
            p,
            sig,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Accuracy grid: methods down, datasets across, `avg` column per row.
///
/// Datasets are sorted by id, methods in their canonical order; absent cells
/// stay empty and are excluded from the row average.
pub fn write_summary_csv<W: io::Write>(
    cells: &[(MethodName, String, f64)],
    out: W,
) -> Result<(), EvalError> {
    let mut datasets: Vec<&str> = cells.iter().map(|(_, d, _)| d.as_str()).collect();
    datasets.sort_unstable();
    datasets.dedup();
    let methods: Vec<MethodName> = MethodName::all()
        .into_iter()
        .filter(|m| cells.iter().any(|(cm, _, _)| cm == m))
        .collect();

    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["method".to_string()];
    header.extend(datasets.iter().map(|d| d.to_string()));
    header.push("avg".to_string());
    w.write_record(&header)?;
    for m in methods {
        let mut record = vec![m.to_string()];
        let mut present = Vec::new();
        for d in &datasets {
            match cells.iter().find(|(cm, cd, _)| cm == &m && cd == d) {
                Some((_, _, acc)) => {
                    record.push(format!("{acc:.1}"));
                    present.push(*acc);
                }
                None => record.push(String::new()),
            }
        }
        record.push(format!("{:.1}", row_average(&present)));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-form CSV of round curves: one `(round, series, accuracy)` row per
/// point, rounds outermost, series in roster order with the majority last.
pub fn write_round_curves_csv<W: io::Write>(curves: &RoundCurves, out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "series", "accuracy_pct"])?;
    for r in 0..curves.rounds as usize {
        for s in &curves.series {
            w.write_record([
                r.to_string(),
                s.name.clone(),
                format!("{:.1}", s.accuracy_by_round[r]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
