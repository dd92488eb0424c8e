//! Run-directory orchestration: prepare everything a run needs, then execute
//! it with resume support.
//!
//! A run directory is self-contained. It snapshots the manifest, task, and
//! dataset it was produced from, keeps one result file per instance as the
//! resumability index, and closes with deterministic `records.jsonl`,
//! `transcripts.jsonl`, `predictions.jsonl`, and `run.json`. Timestamps live
//! only in the ledger.

use crate::manifest::{ProviderKind, RunManifest};
use crate::remote::{AnthropicProvider, GoogleProvider, OpenAiProvider};
use crate::store::{write_atomic, DiskLedger, DiskStore};
use crate::CliError;
use labelcrew_core::committee::{run_majority_vote, run_peer_discussion, CommitteeError, DiscussionTranscript, VoteVariant};
use labelcrew_core::data::{parse_dataset_jsonl, parse_task_json};
use labelcrew_core::ledger::summarize;
use labelcrew_core::methods::{
    annotate_cot, annotate_self_consistency, annotate_self_refine, annotate_vanilla, MethodError,
    SessionCtx,
};
use labelcrew_core::model::{
    validate_dataset, AnnotationRecord, AnnotationTask, Instance, MethodName, ParsedLabel,
};
use labelcrew_core::prompt::{TemplateId, TemplateSet};
use labelcrew_core::provider::{cost_of, ChatProvider, Gateway, PricingRow, PricingTable, RetryPolicy};
use labelcrew_core::provider::mock::{MockProvider, MockScript};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

/// Everything loaded and validated, before any provider traffic.
pub struct PreparedRun {
    pub manifest: RunManifest,
    pub base: PathBuf,
    pub run_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub task_text: String,
    pub dataset_text: String,
    pub task: AnnotationTask,
    pub instances: Vec<Instance>,
    pub dataset_id: String,
    pub templates: TemplateSet,
    template_overrides: BTreeMap<String, String>,
    pub pricing: PricingTable,
    scripts: BTreeMap<String, String>,
}

/// Final state of one instance, stored as `results/NNNNNN.json`; the set of
/// these files doubles as the resume index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceResult {
    pub instance_id: String,
    pub final_label: ParsedLabel,
    pub records: Vec<AnnotationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<DiscussionTranscript>,
    pub call_count: u32,
}

/// `run.json`: the deterministic closing summary of an annotate pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunInfo {
    pub run_id: String,
    pub dataset_id: String,
    pub method: MethodName,
    pub n_instances: usize,
    pub completed: usize,
    pub failed: usize,
    /// List-price cost of all recorded calls, ignoring cache discounts.
    pub total_nominal_usd: Decimal,
}

/// What `execute` reports back for logging.
pub struct RunReport {
    pub info: RunInfo,
    pub resumed: usize,
    pub live_calls: u64,
    pub actual_cost_usd: Decimal,
    pub failures: Vec<(String, String)>,
}

#[derive(Serialize, Deserialize)]
struct FailureLine {
    instance_id: String,
    error: String,
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    instance_id: &'a str,
    label: &'a ParsedLabel,
}

#[derive(Deserialize)]
pub struct PredictionOwned {
    pub instance_id: String,
    pub label: ParsedLabel,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))
}

/// Load a pricing table from TOML (`[[models]]`) or JSON (`{"models": [...]}`).
pub fn load_pricing(path: &Path) -> Result<PricingTable, CliError> {
    #[derive(Deserialize)]
    struct PricingFile {
        models: Vec<PricingRow>,
    }
    let text = read(path)?;
    let rows = if path.extension().is_some_and(|e| e == "json") {
        return PricingTable::from_json_str(&text)
            .map_err(|e| CliError::config(format!("pricing {}: {e}", path.display())));
    } else {
        let file: PricingFile = toml::from_str(&text)
            .map_err(|e| CliError::config(format!("pricing {}: {e}", path.display())))?;
        file.models
    };
    PricingTable::from_rows(&rows)
        .map_err(|e| CliError::config(format!("pricing {}: {e}", path.display())))
}

fn load_templates(dir: &Path) -> Result<(TemplateSet, BTreeMap<String, String>), CliError> {
    let mut set = TemplateSet::default();
    let mut overrides = BTreeMap::new();
    for id in TemplateId::all() {
        let path = dir.join(format!("{}.txt", id.as_str()));
        if path.exists() {
            let body = read(&path)?;
            set.override_template(id, body.clone())
                .map_err(|e| CliError::config(format!("template {}: {e}", path.display())))?;
            overrides.insert(id.as_str().to_string(), body);
        }
    }
    let system_path = dir.join("system.txt");
    if system_path.exists() {
        let body = read(&system_path)?;
        set.override_system(body.clone())
            .map_err(|e| CliError::config(format!("template {}: {e}", system_path.display())))?;
        overrides.insert("system".to_string(), body);
    }
    Ok((set, overrides))
}

/// Load and cross-check everything the manifest references.
pub fn prepare(manifest_path: &Path) -> Result<PreparedRun, CliError> {
    let (manifest, base) = RunManifest::load(manifest_path)?;

    let task_path = manifest.resolve(&base, &manifest.task);
    let task_text = read(&task_path)?;
    let task = parse_task_json(&task_text)
        .map_err(|e| CliError::config(format!("task {}: {e}", task_path.display())))?;

    let dataset_path = manifest.resolve(&base, &manifest.dataset);
    let dataset_text = read(&dataset_path)?;
    let instances = parse_dataset_jsonl(&dataset_text)
        .map_err(|e| CliError::config(format!("dataset {}: {e}", dataset_path.display())))?;
    if instances.is_empty() {
        return Err(CliError::config(format!(
            "dataset {} has no instances",
            dataset_path.display()
        )));
    }
    let report = validate_dataset(&instances, task.label_space());
    if !report.is_clean() {
        let mut msg = format!("dataset {} fails validation:", dataset_path.display());
        for v in &report.violations {
            msg.push_str(&format!("\n  - {v}"));
        }
        return Err(CliError::findings(msg));
    }

    let pricing = load_pricing(&manifest.resolve(&base, &manifest.pricing))?;
    // every roster pair must be priced before any call goes out
    for agent in &manifest.method.agent_roster {
        pricing
            .get(&agent.provider_id, &agent.model_id)
            .map_err(|e| CliError::config(e.to_string()))?;
    }

    let (templates, template_overrides) = match &manifest.templates_dir {
        Some(dir) => load_templates(&manifest.resolve(&base, dir))?,
        None => (TemplateSet::default(), BTreeMap::new()),
    };

    let mut scripts = BTreeMap::new();
    for (id, spec) in &manifest.providers {
        if spec.kind == ProviderKind::Mock {
            let script_path = manifest.resolve(&base, spec.script.as_ref().expect("validated"));
            let text = read(&script_path)?;
            MockScript::from_json_str(&text)
                .map_err(|e| CliError::config(format!("script {}: {e}", script_path.display())))?;
            scripts.insert(id.clone(), text);
        }
    }

    let run_dir = manifest.run_dir(&base);
    let cache_dir = manifest.cache_dir(&base);
    let dataset_id = manifest.dataset_id();
    Ok(PreparedRun {
        manifest,
        base,
        run_dir,
        cache_dir,
        task_text,
        dataset_text,
        task,
        instances,
        dataset_id,
        templates,
        template_overrides,
        pricing,
        scripts,
    })
}

/// Hash of everything that can change annotation outputs. Pricing, workers,
/// and cache settings are deliberately excluded: they change costs or speed,
/// never labels.
fn fingerprint(run: &PreparedRun) -> String {
    #[derive(Serialize)]
    struct ProviderPrint<'a> {
        kind: &'a ProviderKind,
        base_url: Option<&'a str>,
        script: Option<&'a str>,
    }
    #[derive(Serialize)]
    struct Print<'a> {
        task: &'a str,
        dataset: &'a str,
        method: &'a labelcrew_core::model::MethodConfig,
        templates: &'a BTreeMap<String, String>,
        providers: BTreeMap<&'a str, ProviderPrint<'a>>,
    }
    let providers = run
        .manifest
        .providers
        .iter()
        .map(|(id, spec)| {
            (
                id.as_str(),
                ProviderPrint {
                    kind: &spec.kind,
                    base_url: spec.base_url.as_deref(),
                    script: run.scripts.get(id).map(String::as_str),
                },
            )
        })
        .collect();
    let print = Print {
        task: &run.task_text,
        dataset: &run.dataset_text,
        method: &run.manifest.method,
        templates: &run.template_overrides,
        providers,
    };
    let bytes = serde_json::to_vec(&print).expect("fingerprint serialization");
    hex::encode(Sha256::digest(bytes))
}

/// Holds `<run_dir>/lock` for the duration of an invocation. A second
/// invocation on the same run directory is rejected while the first lives;
/// locks left by dead processes are reclaimed.
#[derive(Debug)]
pub struct LockGuard {
    path: PathBuf,
}

impl LockGuard {
    pub fn acquire(run_dir: &Path) -> Result<Self, CliError> {
        let path = run_dir.join("lock");
        for _ in 0..2 {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    use std::io::Write;
                    let _ = write!(f, "{}", std::process::id());
                    return Ok(Self { path });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let holder = fs::read_to_string(&path).unwrap_or_default();
                    let alive = holder
                        .trim()
                        .parse::<u32>()
                        .is_ok_and(|pid| Path::new(&format!("/proc/{pid}")).exists());
                    if alive {
                        return Err(CliError::config(format!(
                            "run directory {} is locked by pid {}; another invocation is active",
                            run_dir.display(),
                            holder.trim()
                        )));
                    }
                    // stale lock from a dead process: reclaim it
                    let _ = fs::remove_file(&path);
                }
                Err(e) => {
                    return Err(CliError::config(format!(
                        "cannot create lock {}: {e}",
                        path.display()
                    )))
                }
            }
        }
        Err(CliError::config(format!(
            "could not acquire lock in {}",
            run_dir.display()
        )))
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn build_gateway(run: &PreparedRun, ledger_path: &Path) -> Result<Gateway, CliError> {
    let mut builder = Gateway::builder().pricing(run.pricing.clone());
    for (id, spec) in &run.manifest.providers {
        let provider: Arc<dyn ChatProvider> = match spec.kind {
            ProviderKind::Mock => {
                let script = MockScript::from_json_str(run.scripts.get(id).expect("prepared"))
                    .expect("script parsed during prepare");
                Arc::new(MockProvider::new(script))
            }
            ProviderKind::Openai | ProviderKind::Anthropic | ProviderKind::Google => {
                let env = spec.api_key_env.as_ref().expect("validated");
                let key = std::env::var(env).map_err(|_| {
                    CliError::config(format!(
                        "provider {id:?}: environment variable {env} is not set"
                    ))
                })?;
                let default_base = match spec.kind {
                    ProviderKind::Openai => "https://api.openai.com/v1",
                    ProviderKind::Anthropic => "https://api.anthropic.com",
                    _ => "https://generativelanguage.googleapis.com",
                };
                let base = spec.base_url.as_deref().unwrap_or(default_base);
                match spec.kind {
                    ProviderKind::Openai => Arc::new(OpenAiProvider::new(id, base, &key)),
                    ProviderKind::Anthropic => Arc::new(AnthropicProvider::new(id, base, &key)),
                    _ => Arc::new(GoogleProvider::new(id, base, &key)),
                }
            }
        };
        builder = builder.provider(id.clone(), provider);
    }
    if run.manifest.cache {
        let store = DiskStore::open(&run.cache_dir)
            .map_err(|e| CliError::config(format!("cache {}: {e}", run.cache_dir.display())))?;
        builder = builder.store(Arc::new(store));
    }
    let ledger = DiskLedger::open(ledger_path)
        .map_err(|e| CliError::config(format!("ledger {}: {e}", ledger_path.display())))?;
    builder = builder.ledger(Arc::new(ledger));
    let retry = run.manifest.retry.unwrap_or_default();
    builder = builder.retry(RetryPolicy {
        max_retries: retry.max_retries,
        base_delay_ms: retry.base_delay_ms,
    });
    Ok(builder.build())
}

fn annotate_instance(
    ctx: &SessionCtx<'_>,
    instance: &Instance,
) -> Result<InstanceResult, CommitteeError> {
    fn single(
        outcome: labelcrew_core::methods::MethodOutcome,
        instance_id: &str,
    ) -> InstanceResult {
        let mut records = outcome.intermediates;
        records.push(outcome.final_record);
        let final_label = records.last().expect("final record").parsed_label.clone();
        InstanceResult {
            instance_id: instance_id.to_string(),
            final_label,
            records,
            transcript: None,
            call_count: outcome.call_count,
        }
    }
    fn committee(transcript: DiscussionTranscript, instance_id: &str) -> InstanceResult {
        let records: Vec<AnnotationRecord> = transcript.rounds.iter().flatten().cloned().collect();
        let call_count = records.len() as u32;
        InstanceResult {
            instance_id: instance_id.to_string(),
            final_label: transcript.final_label.clone(),
            records,
            transcript: Some(transcript),
            call_count,
        }
    }

    let agent = &ctx.config.agent_roster[0];
    let id = &instance.instance_id;
    Ok(match ctx.config.method {
        MethodName::Vanilla => single(annotate_vanilla(ctx, instance, agent)?, id),
        MethodName::Cot => single(annotate_cot(ctx, instance, agent)?, id),
        MethodName::SelfConsistency => single(annotate_self_consistency(ctx, instance, agent)?, id),
        MethodName::SelfRefine => single(annotate_self_refine(ctx, instance, agent)?, id),
        MethodName::MajorityVoteVanilla => {
            committee(run_majority_vote(ctx, instance, VoteVariant::Vanilla)?, id)
        }
        MethodName::MajorityVoteCot => {
            committee(run_majority_vote(ctx, instance, VoteVariant::Cot)?, id)
        }
        MethodName::PeerDiscussion => committee(run_peer_discussion(ctx, instance)?, id),
    })
}

/// Transient provider trouble marks the instance failed and the run moves on;
/// anything else (bad config, script misses, auth) aborts the run.
fn is_transient(err: &CommitteeError) -> bool {
    matches!(
        err,
        CommitteeError::Method(MethodError::Provider { source, .. }) if source.is_retryable()
    )
}

fn result_path(run_dir: &Path, index: usize) -> PathBuf {
    run_dir.join("results").join(format!("{index:06}.json"))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::config(format!("serialize {}: {e}", path.display())))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
        .map_err(|e| CliError::config(format!("write {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes())
        .map_err(|e| CliError::config(format!("write {}: {e}", path.display())))
}

/// Run (or resume) the prepared annotation pass.
pub fn execute(run: &PreparedRun) -> Result<RunReport, CliError> {
    fs::create_dir_all(run.run_dir.join("results"))
        .map_err(|e| CliError::config(format!("create {}: {e}", run.run_dir.display())))?;
    let _lock = LockGuard::acquire(&run.run_dir)?;

    // config drift invalidates results but never the response cache
    let print = fingerprint(run);
    let fp_path = run.run_dir.join("fingerprint.json");
    let previous: Option<String> = fs::read_to_string(&fp_path)
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v.get("fingerprint").and_then(|f| f.as_str()).map(String::from));
    if previous.as_deref() != Some(print.as_str()) {
        if previous.is_some() {
            eprintln!("configuration changed since the last invocation; discarding stale results");
        }
        let results_dir = run.run_dir.join("results");
        let _ = fs::remove_dir_all(&results_dir);
        fs::create_dir_all(&results_dir)
            .map_err(|e| CliError::config(format!("create {}: {e}", results_dir.display())))?;
        for stale in ["records.jsonl", "transcripts.jsonl", "predictions.jsonl", "run.json", "eval.json", "failures.jsonl"] {
            let _ = fs::remove_file(run.run_dir.join(stale));
        }
        write_json(&fp_path, &serde_json::json!({ "fingerprint": print }))?;
    }

    // snapshots make the run directory self-contained for evaluate/report
    write_text(&run.run_dir.join("task.json"), &run.task_text)?;
    write_text(&run.run_dir.join("dataset.jsonl"), &run.dataset_text)?;
    write_json(&run.run_dir.join("manifest.json"), &run.manifest)?;

    let ledger_path = run.run_dir.join("ledger.jsonl");
    let gateway = build_gateway(run, &ledger_path)?;
    let ctx = SessionCtx {
        gateway: &gateway,
        templates: &run.templates,
        task: &run.task,
        config: &run.manifest.method,
        run_id: &run.manifest.run_id,
    };

    let resumed = (0..run.instances.len())
        .filter(|i| result_path(&run.run_dir, *i).exists())
        .count();

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let fatal: Mutex<Option<CliError>> = Mutex::new(None);
    let failures: Mutex<Vec<(usize, String, String)>> = Mutex::new(Vec::new());

    std::thread::scope(|scope| {
        for _ in 0..run.manifest.workers.min(run.instances.len()) {
            scope.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let index = next.fetch_add(1, Ordering::SeqCst);
                let Some(instance) = run.instances.get(index) else {
                    break;
                };
                let path = result_path(&run.run_dir, index);
                if path.exists() {
                    continue;
                }
                match annotate_instance(&ctx, instance) {
                    Ok(result) => {
                        if let Err(e) = write_json(&path, &result) {
                            *fatal.lock().unwrap() = Some(e);
                            abort.store(true, Ordering::SeqCst);
                            break;
                        }
                    }
                    Err(err) if is_transient(&err) => {
                        failures.lock().unwrap().push((
                            index,
                            instance.instance_id.clone(),
                            err.to_string(),
                        ));
                    }
                    Err(err) => {
                        *fatal.lock().unwrap() = Some(CliError::provider(format!(
                            "instance {:?}: {err}",
                            instance.instance_id
                        )));
                        abort.store(true, Ordering::SeqCst);
                        break;
                    }
                }
            });
        }
    });

    if let Some(err) = fatal.lock().unwrap().take() {
        return Err(err);
    }

    let mut failed: Vec<(usize, String, String)> = std::mem::take(&mut *failures.lock().unwrap());
    failed.sort_by_key(|(i, _, _)| *i);
    let mut failure_lines = String::new();
    for (_, instance_id, error) in &failed {
        failure_lines.push_str(&serde_json::to_string(&FailureLine {
            instance_id: instance_id.clone(),
            error: error.clone(),
        }).expect("failure line"));
        failure_lines.push('\n');
    }
    write_text(&run.run_dir.join("failures.jsonl"), &failure_lines)?;

    // close phase: collect per-instance files in dataset order
    let mut results: Vec<Option<InstanceResult>> = Vec::with_capacity(run.instances.len());
    for index in 0..run.instances.len() {
        let path = result_path(&run.run_dir, index);
        if path.exists() {
            let text = read(&path)?;
            let parsed: InstanceResult = serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            if parsed.instance_id != run.instances[index].instance_id {
                return Err(CliError::config(format!(
                    "{} belongs to instance {:?}, expected {:?}; delete the run directory and re-annotate",
                    path.display(),
                    parsed.instance_id,
                    run.instances[index].instance_id
                )));
            }
            results.push(Some(parsed));
        } else {
            results.push(None);
        }
    }

    let mut records_out = String::new();
    let mut transcripts_out = String::new();
    let mut predictions_out = String::new();
    let mut nominal_total = Decimal::ZERO;
    let mut completed = 0usize;
    let roster: BTreeMap<&str, (&str, &str)> = run
        .manifest
        .method
        .agent_roster
        .iter()
        .map(|a| (a.agent_id.as_str(), (a.provider_id.as_str(), a.model_id.as_str())))
        .collect();
    for result in results.iter().flatten() {
        completed += 1;
        for record in &result.records {
            let (provider_id, model_id) = roster
                .get(record.agent_id.as_str())
                .ok_or_else(|| CliError::config(format!("record for unknown agent {:?}", record.agent_id)))?;
            let price = run
                .pricing
                .get(provider_id, model_id)
                .map_err(|e| CliError::config(e.to_string()))?;
            nominal_total += cost_of(record.usage, price);
            records_out.push_str(&serde_json::to_string(record).expect("record line"));
            records_out.push('\n');
        }
        if let Some(t) = &result.transcript {
            transcripts_out.push_str(&serde_json::to_string(t).expect("transcript line"));
            transcripts_out.push('\n');
        }
        predictions_out.push_str(
            &serde_json::to_string(&PredictionLine {
                instance_id: &result.instance_id,
                label: &result.final_label,
            })
            .expect("prediction line"),
        );
        predictions_out.push('\n');
    }

    write_text(&run.run_dir.join("records.jsonl"), &records_out)?;
    if run.manifest.method.method.is_committee() {
        write_text(&run.run_dir.join("transcripts.jsonl"), &transcripts_out)?;
    }
    write_text(&run.run_dir.join("predictions.jsonl"), &predictions_out)?;

    let info = RunInfo {
        run_id: run.manifest.run_id.clone(),
        dataset_id: run.dataset_id.clone(),
        method: run.manifest.method.method,
        n_instances: run.instances.len(),
        completed,
        failed: failed.len(),
        total_nominal_usd: nominal_total,
    };
    write_json(&run.run_dir.join("run.json"), &info)?;

    let ledger_entries = DiskLedger::read_entries(&ledger_path)
        .map_err(|e| CliError::config(format!("{}: {e}", ledger_path.display())))?;
    let summary = summarize(&ledger_entries);

    Ok(RunReport {
        info,
        resumed,
        live_calls: gateway.live_calls(),
        actual_cost_usd: summary.total_usd,
        failures: failed
            .into_iter()
            .map(|(_, id, err)| (id, err))
            .collect(),
    })
}

/// Read back a run directory produced by [`execute`].
pub struct LoadedRun {
    pub dir: PathBuf,
    pub info: RunInfo,
    pub manifest: RunManifest,
    pub task: AnnotationTask,
    pub instances: Vec<Instance>,
    pub predictions: BTreeMap<String, ParsedLabel>,
}

impl LoadedRun {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let info_text = read(&dir.join("run.json")).map_err(|_| {
            CliError::config(format!(
                "{} is not a completed run directory (missing run.json); run `labelcrew annotate` first",
                dir.display()
            ))
        })?;
        let info: RunInfo = serde_json::from_str(&info_text)
            .map_err(|e| CliError::config(format!("{}/run.json: {e}", dir.display())))?;
        let manifest_text = read(&dir.join("manifest.json"))?;
        let manifest: RunManifest = serde_json::from_str(&manifest_text)
            .map_err(|e| CliError::config(format!("{}/manifest.json: {e}", dir.display())))?;
        let task = parse_task_json(&read(&dir.join("task.json"))?)
            .map_err(|e| CliError::config(format!("{}/task.json: {e}", dir.display())))?;
        let instances = parse_dataset_jsonl(&read(&dir.join("dataset.jsonl"))?)
            .map_err(|e| CliError::config(format!("{}/dataset.jsonl: {e}", dir.display())))?;
        let mut predictions = BTreeMap::new();
        let pred_text = read(&dir.join("predictions.jsonl"))?;
        for line in pred_text.lines().filter(|l| !l.trim().is_empty()) {
            let p: PredictionOwned = serde_json::from_str(line)
                .map_err(|e| CliError::config(format!("{}/predictions.jsonl: {e}", dir.display())))?;
            predictions.insert(p.instance_id, p.label);
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            info,
            manifest,
            task,
            instances,
            predictions,
        })
    }

    pub fn transcripts(&self) -> Result<Vec<DiscussionTranscript>, CliError> {
        let path = self.dir.join("transcripts.jsonl");
        let text = read(&path)?;
        let mut out = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            out.push(
                serde_json::from_str(line)
                    .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?,
            );
        }
        Ok(out)
    }

    pub fn ledger_entries(&self) -> Result<Vec<labelcrew_core::ledger::LedgerEntry>, CliError> {
        DiskLedger::read_entries(&self.dir.join("ledger.jsonl"))
            .map_err(|e| CliError::config(format!("{}: {e}", self.dir.display())))
    }
}
