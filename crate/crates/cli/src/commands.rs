//! The four subcommands. Each returns the process exit code on success and a
//! [`CliError`] (which also carries an exit code) on failure.

use crate::run::{self, LoadedRun};
use crate::CliError;
use labelcrew_core::data::{parse_dataset_jsonl, parse_task_json};
use labelcrew_core::eval::{
    self, delta, mcnemar_test, permutation_test, round_curves, write_results_csv,
    write_round_curves_csv, write_summary_csv, EvalResult, EvalRow, PairedTest,
    SignificanceVerdict,
};
use labelcrew_core::ledger::{cost_effectiveness_table, summarize, write_cost_csv, CostPoint};
use labelcrew_core::model::MethodName;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

/// Check a dataset against its task definition; exit 1 on violations.
pub fn cmd_validate(task_path: &Path, dataset_path: &Path) -> Result<i32, CliError> {
    let task = parse_task_json(&read(task_path)?)
        .map_err(|e| CliError::config(format!("task {}: {e}", task_path.display())))?;
    let instances = parse_dataset_jsonl(&read(dataset_path)?)
        .map_err(|e| CliError::config(format!("dataset {}: {e}", dataset_path.display())))?;
    let report = labelcrew_core::model::validate_dataset(&instances, task.label_space());
    let gold = instances.iter().filter(|i| i.gold_label.is_some()).count();
    if report.is_clean() {
        println!(
            "ok: {} instances ({} gold-labeled), labels [{}]",
            instances.len(),
            gold,
            task.label_space().labels().join(", ")
        );
        Ok(0)
    } else {
        for v in &report.violations {
            println!("violation: {v}");
        }
        println!("{} violation(s) in {} instances", report.violations.len(), instances.len());
        Ok(1)
    }
}

/// Run a manifest to completion (resumes if the run directory already has
/// results). Exit 3 if any instance stayed failed after retries.
pub fn cmd_annotate(manifest_path: &Path) -> Result<i32, CliError> {
    let prepared = run::prepare(manifest_path)?;
    let report = run::execute(&prepared)?;
    if report.resumed > 0 {
        println!("resumed: {} instance(s) already complete", report.resumed);
    }
    println!(
        "run {} -> {}",
        report.info.run_id,
        prepared.run_dir.display()
    );
    println!(
        "instances: {} completed, {} failed of {} ({} live calls this invocation)",
        report.info.completed, report.info.failed, report.info.n_instances, report.live_calls
    );
    println!(
        "cost: {} USD actual, {} USD nominal",
        report.actual_cost_usd, report.info.total_nominal_usd
    );
    if report.failures.is_empty() {
        Ok(0)
    } else {
        for (id, err) in &report.failures {
            eprintln!("failed {id}: {err}");
        }
        eprintln!("re-run the same command to retry failed instances");
        Ok(3)
    }
}

/// What `evaluate` leaves inside each run directory for `report` to pick up.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalFile {
    pub run_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_run_id: Option<String>,
    pub result: EvalResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<SignificanceVerdict>,
}

#[derive(Serialize)]
struct ResultsJson<'a> {
    baseline_run_id: Option<&'a str>,
    rows: &'a [EvalRow],
}

/// Score one or more completed runs; optionally compare same-dataset runs
/// against a named baseline run.
pub fn cmd_evaluate(
    run_dirs: &[PathBuf],
    baseline: Option<&str>,
    out_dir: &Path,
    seed: u64,
    resamples: u32,
) -> Result<i32, CliError> {
    let runs = load_runs(run_dirs)?;

    let mut scored: Vec<(usize, EvalResult)> = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let result = eval::score(
            run.info.dataset_id.clone(),
            run.info.method,
            &run.predictions,
            &run.instances,
            run.task.label_space(),
        )
        .map_err(|e| CliError::findings(format!("run {}: {e}", run.info.run_id)))?;
        scored.push((i, result));
    }

    // same-dataset runs must agree on the scored instance set
    let mut by_dataset: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, result) in &scored {
        by_dataset.entry(result.dataset_id.as_str()).or_default().push(*i);
    }
    for (dataset, members) in &by_dataset {
        let ids = |i: usize| -> Vec<&str> {
            scored[i].1.per_instance.iter().map(|p| p.instance_id.as_str()).collect()
        };
        let first = ids(members[0]);
        for &other in &members[1..] {
            if ids(other) != first {
                return Err(CliError::findings(format!(
                    "runs {} and {} disagree on the instance set for dataset {dataset}",
                    runs[members[0]].info.run_id, runs[other].info.run_id
                )));
            }
        }
    }

    let baseline_idx = match baseline {
        Some(id) => Some(
            runs.iter()
                .position(|r| r.info.run_id == id)
                .ok_or_else(|| CliError::config(format!("baseline run {id:?} is not among the evaluated runs")))?,
        ),
        None => None,
    };

    let mut rows: Vec<EvalRow> = Vec::new();
    let mut eval_files: Vec<EvalFile> = Vec::new();
    for (i, result) in &scored {
        let run = &runs[*i];
        let mut delta_pct = None;
        let mut test: Option<PairedTest> = None;
        let mut verdict = None;
        if let Some(b) = baseline_idx {
            let base = &scored[b].1;
            if *i != b && base.dataset_id == result.dataset_id {
                delta_pct = Some(delta(result.accuracy_pct, base.accuracy_pct));
                let sampled = result.method == MethodName::SelfConsistency
                    || base.method == MethodName::SelfConsistency;
                let t = if sampled {
                    permutation_test(result, base, resamples, seed)
                } else {
                    mcnemar_test(result, base)
                }
                .map_err(|e| CliError::findings(format!("run {}: {e}", run.info.run_id)))?;
                verdict = Some(SignificanceVerdict::from_test(
                    result.method.as_str(),
                    base.method.as_str(),
                    &t,
                ));
                test = Some(t);
            }
        }
        rows.push(EvalRow {
            run_id: run.info.run_id.clone(),
            dataset_id: result.dataset_id.clone(),
            method: result.method,
            n: result.n,
            correct: result.correct,
            invalid: result.invalid,
            accuracy_pct: result.accuracy_pct,
            delta_pct,
            test,
        });
        eval_files.push(EvalFile {
            run_id: run.info.run_id.clone(),
            baseline_run_id: baseline.filter(|_| delta_pct.is_some()).map(String::from),
            result: result.clone(),
            delta_pct,
            verdict,
        });
    }

    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::config(format!("create {}: {e}", out_dir.display())))?;
    let results_csv = out_dir.join("results.csv");
    let mut buf = Vec::new();
    write_results_csv(&rows, &mut buf).map_err(|e| CliError::config(e.to_string()))?;
    write_bytes(&results_csv, &buf)?;

    let results_json = out_dir.join("results.json");
    let payload = ResultsJson { baseline_run_id: baseline, rows: &rows };
    write_bytes(
        &results_json,
        &serde_json::to_vec_pretty(&payload).expect("results json"),
    )?;

    let cells: Vec<(MethodName, String, f64)> = scored
        .iter()
        .map(|(_, r)| (r.method, r.dataset_id.clone(), r.accuracy_pct))
        .collect();
    let mut buf = Vec::new();
    write_summary_csv(&cells, &mut buf).map_err(|e| CliError::config(e.to_string()))?;
    write_bytes(&out_dir.join("summary.csv"), &buf)?;

    for (file, (i, _)) in eval_files.iter().zip(scored.iter()) {
        let path = runs[*i].dir.join("eval.json");
        write_bytes(&path, &serde_json::to_vec_pretty(file).expect("eval json"))?;
    }

    for (row, file) in rows.iter().zip(eval_files.iter()) {
        let mut line = format!(
            "{}  {}  {}  acc {:.1}% ({} of {}, {} invalid)",
            row.run_id, row.dataset_id, row.method, row.accuracy_pct, row.correct, row.n, row.invalid
        );
        if let (Some(d), Some(v)) = (row.delta_pct, file.verdict.as_ref()) {
            line.push_str(&format!(
                "  delta {d:+.1} vs {}, p = {:.4}{}",
                baseline.unwrap_or("?"),
                v.p_value,
                if v.significant { " (significant)" } else { "" }
            ));
        }
        println!("{line}");
    }
    println!("wrote {}", results_csv.display());
    Ok(0)
}

/// Cost-effectiveness table (with Pareto flags) and, for peer-discussion
/// runs, accuracy-by-round curves. Requires `evaluate` to have run first.
pub fn cmd_report(run_dirs: &[PathBuf], out_dir: &Path) -> Result<i32, CliError> {
    let runs = load_runs(run_dirs)?;

    let mut points = Vec::new();
    let mut evals = Vec::new();
    for run in &runs {
        let eval_path = run.dir.join("eval.json");
        if !eval_path.exists() {
            return Err(CliError::config(format!(
                "run {} has no evaluation yet; run `labelcrew evaluate --runs {}` first",
                run.info.run_id,
                run.dir.display()
            )));
        }
        let file: EvalFile = serde_json::from_str(&read(&eval_path)?)
            .map_err(|e| CliError::config(format!("{}: {e}", eval_path.display())))?;
        let summary = summarize(&run.ledger_entries()?);
        points.push(CostPoint {
            label: run.info.run_id.clone(),
            method: run.info.method,
            accuracy_pct: file.result.accuracy_pct,
            cost_usd: summary.mean_per_instance(),
            nominal_cost_usd: summary.nominal_mean_per_instance(),
        });
        evals.push(file);
    }

    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::config(format!("create {}: {e}", out_dir.display())))?;
    let table = cost_effectiveness_table(points);
    let mut buf = Vec::new();
    write_cost_csv(&table, &mut buf).map_err(|e| CliError::config(e.to_string()))?;
    let cost_path = out_dir.join("cost_effectiveness.csv");
    write_bytes(&cost_path, &buf)?;
    for row in &table {
        println!(
            "{}  {}  acc {:.1}%  {} USD/instance (nominal {}){}",
            row.point.label,
            row.point.method,
            row.point.accuracy_pct,
            row.point.cost_usd,
            row.point.nominal_cost_usd,
            if row.pareto { "  [pareto]" } else { "" }
        );
    }
    println!("wrote {}", cost_path.display());

    for run in &runs {
        if run.info.method != MethodName::PeerDiscussion {
            continue;
        }
        let transcripts = run.transcripts()?;
        let min_rounds = run.manifest.method.max_discussion_rounds + 1;
        let curves = round_curves(
            &transcripts,
            &run.instances,
            run.task.label_space(),
            min_rounds,
        )
        .map_err(|e| CliError::findings(format!("run {}: {e}", run.info.run_id)))?;
        let mut buf = Vec::new();
        write_round_curves_csv(&curves, &mut buf).map_err(|e| CliError::config(e.to_string()))?;
        let path = out_dir.join(format!("round_curves_{}.csv", run.info.run_id));
        write_bytes(&path, &buf)?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn load_runs(run_dirs: &[PathBuf]) -> Result<Vec<LoadedRun>, CliError> {
    if run_dirs.is_empty() {
        return Err(CliError::config("no run directories given"));
    }
    let mut runs = Vec::new();
    for dir in run_dirs {
        runs.push(LoadedRun::load(dir)?);
    }
    let mut ids: Vec<&str> = runs.iter().map(|r| r.info.run_id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::config("the same run_id appears twice"));
    }
    Ok(runs)
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    crate::store::write_atomic(path, bytes)
        .map_err(|e| CliError::config(format!("write {}: {e}", path.display())))
}
