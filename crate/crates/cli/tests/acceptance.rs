//! Acceptance suite: one test per release criterion, each printing a
//! `criterion N (...): pass` line (run with `--nocapture` to see them all).
//!
//! Every check verifies the shipped implementation against an independent
//! oracle written here: hand arithmetic, brute-force enumeration, protocol
//! simulation straight from the script, or exhaustive search.

use labelcrew_cli::commands::{cmd_evaluate, cmd_report, EvalFile};
use labelcrew_cli::run::{execute, prepare, LoadedRun};
use labelcrew_core::committee::{majority_vote, run_peer_discussion, Resolution};
use labelcrew_core::eval::{delta, mcnemar_p, paired_sign_flip_p, row_average};
use labelcrew_core::ledger::{
    cost_effectiveness_table, summarize, CostPoint, LedgerEntry,
};
use labelcrew_core::methods::{
    annotate_cot, annotate_self_consistency, annotate_self_refine, annotate_vanilla, SessionCtx,
};
use labelcrew_core::model::{
    AgentSpec, AnnotationRecord, AnnotationTask, Instance, LabelSpace, MethodConfig, MethodName,
    ParsedLabel,
};
use labelcrew_core::prompt::TemplateSet;
use labelcrew_core::provider::mock::{MockProvider, MockRule, MockScript};
use labelcrew_core::provider::{cost_of, Gateway, ModelPrice, PricingTable, TokenUsage};
use rust_decimal::Decimal;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

// ---------------------------------------------------------------- helpers

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rng_below(state: &mut u64, n: u64) -> u64 {
    splitmix(state) % n
}

const LABEL_POOL: [&str; 4] = ["alpha", "beta", "gamma", "delta"];

fn space_of(n: usize) -> LabelSpace {
    LabelSpace::new(
        LABEL_POOL[..n].iter().map(|s| s.to_string()).collect(),
        "general",
    )
    .unwrap()
}

fn task_of(space: LabelSpace) -> AnnotationTask {
    AnnotationTask::new(
        "acceptance-task",
        "Assign the correct category to the sample.",
        "alpha: first kind.\nbeta: second kind.\ngamma: third kind.\ndelta: fourth kind.",
        space,
    )
    .unwrap()
}

fn zero_priced_table(models: &[&str]) -> PricingTable {
    let mut t = PricingTable::new();
    for m in models {
        t.insert("lab", *m, Decimal::ZERO, Decimal::ZERO).unwrap();
    }
    t
}

fn bare_record(agent: &str, label: Option<&str>) -> AnnotationRecord {
    AnnotationRecord {
        instance_id: "x".into(),
        agent_id: agent.into(),
        method: MethodName::PeerDiscussion,
        round: 0,
        sample_index: 0,
        raw_output: String::new(),
        parsed_label: match label {
            Some(l) => ParsedLabel::Valid(l.into()),
            None => ParsedLabel::Invalid,
        },
        reasoning: None,
        usage: TokenUsage::default(),
    }
}

/// Index of the first maximum with a nonzero count, if any.
fn first_max(counts: &[u32]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in counts.iter().enumerate() {
        if *c > 0 && best.map_or(true, |b| *c > counts[b]) {
            best = Some(i);
        }
    }
    best
}

// ------------------------------------------------- criterion 1: arithmetic

#[test]
fn criterion_1_headline_table_arithmetic() {
    // four baseline rows: six per-dataset accuracies each, and the published
    // row average they must reproduce exactly at one decimal
    let rows: [([f64; 6], f64); 4] = [
        ([47.4, 60.4, 58.9, 64.4, 71.8, 37.1], 56.7),
        ([67.2, 67.6, 65.8, 79.3, 82.2, 44.4], 67.8),
        ([64.6, 67.6, 54.8, 73.2, 80.6, 42.8], 63.9),
        ([61.2, 63.6, 71.2, 65.6, 80.8, 46.9], 64.9),
    ];
    for (cells, avg) in &rows {
        assert_eq!(row_average(cells), *avg, "row average for {cells:?}");
    }

    // every improvement/regression annotation in the method-comparison block:
    // (method value, baseline value, published delta)
    let deltas: [(f64, f64, f64); 18] = [
        (71.0, 67.2, 3.8),
        (68.2, 67.6, 0.6),
        (68.5, 65.8, 2.7),
        (81.1, 79.3, 1.8),
        (79.8, 82.2, -2.4),
        (43.9, 44.4, -0.5),
        (72.4, 67.2, 5.2),
        (70.4, 67.6, 2.8),
        (68.5, 65.8, 2.7),
        (78.9, 79.3, -0.4),
        (82.4, 82.2, 0.2),
        (45.0, 44.4, 0.6),
        (70.0, 67.2, 2.8),
        (69.2, 67.6, 1.6),
        (69.9, 65.8, 4.1),
        (81.5, 79.3, 2.2),
        (78.0, 82.2, -4.2),
        (45.5, 44.4, 1.1),
    ];
    for (value, baseline, expected) in &deltas {
        assert_eq!(
            delta(*value, *baseline),
            *expected,
            "delta for {value} vs {baseline}"
        );
    }
    println!("criterion 1 (headline table arithmetic): pass");
}

// ------------------------------------- criterion 2: protocol oracle suite

/// Scripted per-agent, per-round choices: `Some(label index)` or `None` for
/// an unparseable reply.
struct Scenario {
    roster_n: usize,
    max_rounds: u32,
    space_n: usize,
    choices: Vec<Vec<Option<usize>>>, // [agent][round]
}

fn random_scenario(state: &mut u64) -> Scenario {
    let roster_n = 2 + rng_below(state, 3) as usize; // 2..=4
    let max_rounds = rng_below(state, 4) as u32; // 0..=3
    let space_n = 2 + rng_below(state, 3) as usize; // 2..=4
    let choices = (0..roster_n)
        .map(|_| {
            (0..=max_rounds)
                .map(|_| {
                    if rng_below(state, 8) == 0 {
                        None
                    } else {
                        Some(rng_below(state, space_n as u64) as usize)
                    }
                })
                .collect()
        })
        .collect();
    Scenario { roster_n, max_rounds, space_n, choices }
}

/// Replays the consensus protocol directly from the scripted choices.
struct ProtocolOracle {
    total_rounds: usize,
    consensus_round: Option<u32>,
    final_label: Option<usize>, // None = invalid
}

fn oracle_run(s: &Scenario) -> ProtocolOracle {
    let mut consensus_round = None;
    for r in 0..=(s.max_rounds as usize) {
        let first = s.choices[0][r];
        let unanimous = first.is_some() && s.choices.iter().all(|agent| agent[r] == first);
        if unanimous {
            consensus_round = Some(r as u32);
            break;
        }
    }
    let total_rounds = consensus_round
        .map(|r| r as usize + 1)
        .unwrap_or(s.max_rounds as usize + 1);
    let final_label = match consensus_round {
        Some(r) => s.choices[0][r as usize],
        None => {
            // count-then-order plurality over the last round
            let last = s.max_rounds as usize;
            let mut counts = vec![0u32; s.space_n];
            for agent in &s.choices {
                if let Some(i) = agent[last] {
                    counts[i] += 1;
                }
            }
            first_max(&counts)
        }
    };
    ProtocolOracle { total_rounds, consensus_round, final_label }
}

#[test]
fn criterion_2_protocol_oracle_suite() {
    // part 1: 200 random scripted discussions vs. an independent simulation
    let mut state = 0x0AC5_EEDu64;
    for case in 0..200 {
        let scenario = random_scenario(&mut state);
        let space = space_of(scenario.space_n);
        let task = task_of(space.clone());
        let mut script = MockScript::default(); // no default reply: a miss fails loudly
        for (a, rounds) in scenario.choices.iter().enumerate() {
            for (r, choice) in rounds.iter().enumerate() {
                let reply = match choice {
                    Some(i) => format!("Answer: {}", LABEL_POOL[*i]),
                    None => "I cannot decide between the options.".to_string(),
                };
                script = script.with_rule(
                    MockRule::new(reply)
                        .for_agent(format!("a{a}"))
                        .at_round(r as u32),
                );
            }
        }
        let mock = Arc::new(MockProvider::new(script));
        let gateway = Gateway::builder()
            .provider("lab", mock.clone())
            .pricing(zero_priced_table(&["m"]))
            .build();
        let roster: Vec<AgentSpec> = (0..scenario.roster_n)
            .map(|a| AgentSpec {
                agent_id: format!("a{a}"),
                provider_id: "lab".into(),
                model_id: "m".into(),
            })
            .collect();
        let mut config = MethodConfig::new(MethodName::PeerDiscussion, roster);
        config.max_discussion_rounds = scenario.max_rounds;
        let templates = TemplateSet::default();
        let ctx = SessionCtx {
            gateway: &gateway,
            templates: &templates,
            task: &task,
            config: &config,
            run_id: "acceptance",
        };
        let instance = Instance {
            instance_id: "x".into(),
            payload: "the sample under discussion".into(),
            gold_label: None,
        };

        let transcript = run_peer_discussion(&ctx, &instance)
            .unwrap_or_else(|e| panic!("case {case}: {e}"));
        let expected = oracle_run(&scenario);

        // termination bound and call-count law
        assert!(
            transcript.rounds.len() <= scenario.max_rounds as usize + 1,
            "case {case}: exceeded round cap"
        );
        assert_eq!(transcript.rounds.len(), expected.total_rounds, "case {case}: rounds");
        for round in &transcript.rounds {
            assert_eq!(round.len(), scenario.roster_n, "case {case}: roster coverage");
        }
        assert_eq!(
            mock.call_count(),
            (scenario.roster_n * expected.total_rounds) as u64,
            "case {case}: provider calls"
        );

        // consensus soundness
        assert_eq!(transcript.consensus_round, expected.consensus_round, "case {case}");
        match expected.consensus_round {
            Some(_) => assert_eq!(transcript.resolved_by, Resolution::Consensus),
            None => assert_eq!(transcript.resolved_by, Resolution::Plurality),
        }
        let expected_label = expected.final_label.map(|i| LABEL_POOL[i]);
        assert_eq!(
            transcript.final_label.as_valid(),
            expected_label,
            "case {case}: final label"
        );
    }

    // part 2: exhaustive majority vote vs. brute-force count-then-order over
    // every multiset of size <= 5 drawn from labels-plus-invalid
    let mut checked = 0u32;
    for space_n in 2..=4usize {
        let space = space_of(space_n);
        let choice_count = space_n + 1; // index space_n = invalid ballot
        for size in 1..=5usize {
            let mut pick = vec![0usize; size];
            'multisets: loop {
                let records: Vec<AnnotationRecord> = pick
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| {
                        bare_record(&format!("a{k}"), (c < space_n).then(|| LABEL_POOL[c]))
                    })
                    .collect();
                let got = majority_vote(&records, &space).unwrap();

                let mut counts = vec![0u32; space_n];
                for &c in &pick {
                    if c < space_n {
                        counts[c] += 1;
                    }
                }
                assert_eq!(
                    got.as_valid(),
                    first_max(&counts).map(|i| LABEL_POOL[i]),
                    "multiset {pick:?} over {space_n} labels"
                );
                checked += 1;

                // advance to the next non-decreasing index vector
                for pos in (0..size).rev() {
                    if pick[pos] + 1 < choice_count {
                        let v = pick[pos] + 1;
                        for slot in pick.iter_mut().skip(pos) {
                            *slot = v;
                        }
                        continue 'multisets;
                    }
                }
                break;
            }
        }
    }
    // sum over spaces of multiset counts C(c+k-1, k), c = labels + invalid:
    // 55 (two labels) + 125 (three) + 251 (four)
    assert_eq!(checked, 431, "exhaustive sweep covered the wrong census");
    println!("criterion 2 (protocol oracle suite): pass");
}

// ----------------------------------------- criterion 3: method-shape suite

#[test]
fn criterion_3_method_shape_suite() {
    let space = space_of(3);
    let task = task_of(space);
    let script = MockScript::always("The category is clear.\nAnswer: beta");
    let mock = Arc::new(MockProvider::new(script));
    let gateway = Gateway::builder()
        .provider("lab", mock.clone())
        .pricing(zero_priced_table(&["m"]))
        .build();
    let instances: Vec<Instance> = (0..50)
        .map(|i| Instance {
            instance_id: format!("i{i:02}"),
            payload: format!("sample number {i}"),
            gold_label: None,
        })
        .collect();
    let solo = vec![AgentSpec {
        agent_id: "a0".into(),
        provider_id: "lab".into(),
        model_id: "m".into(),
    }];
    let templates = TemplateSet::default();

    let mut before = 0u64;
    for (method, expected_calls) in [
        (MethodName::Vanilla, 1u32),
        (MethodName::Cot, 1),
        (MethodName::SelfConsistency, 5),
        (MethodName::SelfRefine, 3),
    ] {
        let config = MethodConfig::new(method, solo.clone());
        let ctx = SessionCtx {
            gateway: &gateway,
            templates: &templates,
            task: &task,
            config: &config,
            run_id: "acceptance",
        };
        for instance in &instances {
            let outcome = match method {
                MethodName::Vanilla => annotate_vanilla(&ctx, instance, &solo[0]),
                MethodName::Cot => annotate_cot(&ctx, instance, &solo[0]),
                MethodName::SelfConsistency => annotate_self_consistency(&ctx, instance, &solo[0]),
                MethodName::SelfRefine => annotate_self_refine(&ctx, instance, &solo[0]),
                _ => unreachable!(),
            }
            .unwrap();
            assert_eq!(outcome.call_count, expected_calls, "{method:?} call count");
            // identical samples must reduce to the sample's own label
            assert_eq!(outcome.label().as_valid(), Some("beta"), "{method:?} label");
        }
        let spent = mock.call_count() - before;
        assert_eq!(spent, u64::from(expected_calls) * 50, "{method:?} total calls");
        before = mock.call_count();
    }

    // roster-of-1 peer discussion degenerates to a single reasoning pass
    let pd_config = MethodConfig::new(MethodName::PeerDiscussion, solo.clone());
    let cot_config = MethodConfig::new(MethodName::Cot, solo.clone());
    let pd_ctx = SessionCtx {
        gateway: &gateway,
        templates: &templates,
        task: &task,
        config: &pd_config,
        run_id: "acceptance",
    };
    let cot_ctx = SessionCtx {
        gateway: &gateway,
        templates: &templates,
        task: &task,
        config: &cot_config,
        run_id: "acceptance",
    };
    for instance in instances.iter().take(10) {
        let before = mock.call_count();
        let transcript = run_peer_discussion(&pd_ctx, instance).unwrap();
        assert_eq!(mock.call_count() - before, 1, "solo discussion is one call");
        assert_eq!(transcript.rounds.len(), 1);
        assert_eq!(transcript.consensus_round, Some(0));
        assert_eq!(transcript.resolved_by, Resolution::Consensus);
        let cot = annotate_cot(&cot_ctx, instance, &solo[0]).unwrap();
        assert_eq!(transcript.final_label, cot.final_record.parsed_label);
    }
    println!("criterion 3 (method-shape suite): pass");
}

// -------------------------------------- criterion 4: significance correctness

#[test]
fn criterion_4_significance_correctness() {
    // exhaustive enumeration oracle: every outcome vector of n coin flips,
    // two-tailed mass at or beyond the observed split
    for n in 0..=12u32 {
        for b in 0..=n {
            let c = n - b;
            let p = mcnemar_p(u64::from(b), u64::from(c));
            if n == 0 {
                assert_eq!(p, 1.0);
                continue;
            }
            let (lo, hi) = (b.min(c), b.max(c));
            let mut favorable = 0u64;
            for mask in 0u32..(1 << n) {
                let k = mask.count_ones();
                if k <= lo || k >= hi {
                    favorable += 1;
                }
            }
            let oracle = (favorable as f64 / f64::from(1u32 << n)).min(1.0);
            assert_eq!(
                p.to_bits(),
                oracle.to_bits(),
                "exact disagreement at b={b} c={c}"
            );
        }
    }

    // 20 synthetic paired-outcome vectors at evaluation-set size: the exact
    // test and a 100k-resample sign-flip permutation must agree closely
    let mut state = 0x0516_F1A7u64;
    let mut max_gap = 0f64;
    for trial in 0..20u64 {
        let mut diffs = Vec::with_capacity(500);
        let mut b_count = 0u64;
        let mut c_count = 0u64;
        for _ in 0..500 {
            let truth_right = rng_below(&mut state, 100) < 70;
            let a = truth_right ^ (rng_below(&mut state, 100) < 15);
            let b = truth_right ^ (rng_below(&mut state, 100) < 15);
            let d = i32::from(a) - i32::from(b);
            if d > 0 {
                b_count += 1;
            }
            if d < 0 {
                c_count += 1;
            }
            diffs.push(d);
        }
        let exact = mcnemar_p(b_count, c_count);
        let sampled = paired_sign_flip_p(&diffs, 100_000, 1_000 + trial);
        let gap = (exact - sampled).abs();
        max_gap = max_gap.max(gap);
        assert!(
            gap <= 0.005,
            "trial {trial}: exact {exact} vs permutation {sampled} (gap {gap})"
        );
    }
    println!("criterion 4 (significance correctness): pass (max |Δp| = {max_gap:.5})");
}

// ------------------------------------ criterion 5: warm-replay determinism

/// On-disk fixture shared by the pipeline criteria: a task, datasets, a
/// scripted provider, pricing, and generated manifests.
struct World {
    root: PathBuf,
}

const WORLD_METHODS: [(MethodName, &str); 7] = [
    (MethodName::Vanilla, "vanilla"),
    (MethodName::Cot, "cot"),
    (MethodName::SelfConsistency, "self_consistency"),
    (MethodName::SelfRefine, "self_refine"),
    (MethodName::MajorityVoteVanilla, "majority_vote_vanilla"),
    (MethodName::MajorityVoteCot, "majority_vote_cot"),
    (MethodName::PeerDiscussion, "peer_discussion"),
];

fn is_committee(method: MethodName) -> bool {
    matches!(
        method,
        MethodName::MajorityVoteVanilla | MethodName::MajorityVoteCot | MethodName::PeerDiscussion
    )
}

impl World {
    /// Six-instance datasets over alpha/beta/gamma with three behavior bands:
    /// i0/i1 answer uniformly, i2/i3 disagree then converge on the first
    /// rework, i4/i5 never agree (one label per agent, tie broken by space
    /// order).
    fn new(root: &Path, dataset_count: usize) -> World {
        let task = serde_json::json!({
            "task_id": "category",
            "task_description": "Assign the correct category to the sample.",
            "guideline": "alpha: first kind.\nbeta: second kind.\ngamma: third kind.",
            "labels": ["alpha", "beta", "gamma"],
            "domain_tag": "general"
        });
        fs::write(root.join("task.json"), serde_json::to_string_pretty(&task).unwrap()).unwrap();

        let golds = ["alpha", "gamma", "alpha", "alpha", "beta", "alpha"];
        for d in 0..dataset_count {
            let mut lines = String::new();
            for (j, gold) in golds.iter().enumerate() {
                lines.push_str(
                    &serde_json::to_string(&serde_json::json!({
                        "instance_id": format!("i{j}"),
                        "payload": format!("dataset {d} sample {j}: an item to categorize"),
                        "gold_label": gold
                    }))
                    .unwrap(),
                );
                lines.push('\n');
            }
            fs::write(root.join(format!("d{d}.jsonl")), lines).unwrap();
        }

        let script = serde_json::json!({
            "rules": [
                {"instance_id": "i0", "reply": "plainly the first kind\nAnswer: alpha"},
                {"instance_id": "i1", "reply": "looks like the second kind\nAnswer: beta"},
                {"instance_id": "i2", "round": 0, "agent_id": "a2", "reply": "second kind?\nAnswer: beta"},
                {"instance_id": "i2", "reply": "agreed, first kind\nAnswer: alpha"},
                {"instance_id": "i3", "round": 0, "agent_id": "a3", "reply": "third kind?\nAnswer: gamma"},
                {"instance_id": "i3", "reply": "agreed, first kind\nAnswer: alpha"},
                {"instance_id": "i4", "agent_id": "a2", "reply": "mine says beta\nAnswer: beta"},
                {"instance_id": "i4", "agent_id": "a3", "reply": "mine says gamma\nAnswer: gamma"},
                {"instance_id": "i4", "reply": "mine says alpha\nAnswer: alpha"},
                {"instance_id": "i5", "agent_id": "a2", "reply": "still beta\nAnswer: beta"},
                {"instance_id": "i5", "agent_id": "a3", "reply": "still gamma\nAnswer: gamma"},
                {"instance_id": "i5", "reply": "still alpha\nAnswer: alpha"}
            ]
        });
        fs::write(root.join("script.json"), serde_json::to_string_pretty(&script).unwrap())
            .unwrap();

        let mut pricing = String::new();
        for m in ["m1", "m2", "m3"] {
            pricing.push_str(&format!(
                "[[models]]\nprovider = \"lab\"\nmodel = \"{m}\"\ninput_per_million = \"2.50\"\noutput_per_million = \"10.00\"\n\n"
            ));
        }
        fs::write(root.join("pricing.toml"), pricing).unwrap();

        World { root: root.to_path_buf() }
    }

    fn roster_json(method: MethodName) -> serde_json::Value {
        if is_committee(method) {
            serde_json::json!([
                {"agent_id": "a1", "provider": "lab", "model": "m1"},
                {"agent_id": "a2", "provider": "lab", "model": "m2"},
                {"agent_id": "a3", "provider": "lab", "model": "m3"}
            ])
        } else {
            serde_json::json!([{"agent_id": "a1", "provider": "lab", "model": "m1"}])
        }
    }

    /// Writes a JSON manifest and returns its path.
    fn manifest(
        &self,
        run_id: &str,
        dataset: &str,
        method: MethodName,
        method_str: &str,
        out_dir: &str,
        cache_dir: &str,
        cache: bool,
    ) -> PathBuf {
        let manifest = serde_json::json!({
            "run_id": run_id,
            "task": "task.json",
            "dataset": dataset,
            "pricing": "pricing.toml",
            "out_dir": out_dir,
            "cache_dir": cache_dir,
            "cache": cache,
            "workers": if is_committee(method) { 2 } else { 1 },
            "method": {
                "method": method_str,
                "agent_roster": Self::roster_json(method)
            },
            "providers": {
                "lab": {"kind": "mock", "script": "script.json"}
            }
        });
        let path = self.root.join(format!("{run_id}-{}.json", out_dir.replace('/', "-")));
        fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
        path
    }
}

fn read_bytes(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn criterion_5_warm_replay_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let world = World::new(tmp.path(), 6);

    let mut eval_csvs: Vec<Vec<Vec<u8>>> = Vec::new(); // [pass][dataset-major files]
    for pass in ["pass1", "pass2"] {
        let mut csvs = Vec::new();
        for d in 0..6 {
            let mut run_dirs = Vec::new();
            for (method, method_str) in WORLD_METHODS {
                let run_id = format!("d{d}-{method_str}");
                let manifest_path = world.manifest(
                    &run_id,
                    &format!("d{d}.jsonl"),
                    method,
                    method_str,
                    &format!("{pass}/d{d}-{method_str}"),
                    &format!("cache/d{d}-{method_str}"),
                    true,
                );
                let run = prepare(&manifest_path).unwrap();
                let report = execute(&run).unwrap();
                assert_eq!(report.info.completed, 6, "{pass} {run_id}");
                assert_eq!(report.info.failed, 0, "{pass} {run_id}");
                if pass == "pass2" {
                    // warm replay: every response comes from the shared cache
                    assert_eq!(report.live_calls, 0, "{run_id} hit the provider on replay");
                    let loaded = LoadedRun::load(&run.run_dir).unwrap();
                    let replay_cost = summarize(&loaded.ledger_entries().unwrap()).total_usd;
                    assert_eq!(replay_cost, Decimal::ZERO, "{run_id} replay cost");
                } else {
                    assert!(report.live_calls > 0, "{run_id} never hit the provider");
                }
                run_dirs.push(run.run_dir.clone());
            }

            let eval_out = tmp.path().join(format!("{pass}/eval-d{d}"));
            fs::create_dir_all(&eval_out).unwrap();
            let baseline_id = format!("d{d}-vanilla");
            let code = cmd_evaluate(&run_dirs, Some(baseline_id.as_str()), &eval_out, 17, 20_000)
                .unwrap();
            assert_eq!(code, 0, "{pass} d{d} evaluate");
            csvs.push(read_bytes(&eval_out.join("results.csv")));
            csvs.push(read_bytes(&eval_out.join("summary.csv")));
        }
        eval_csvs.push(csvs);
    }

    // annotation outputs are byte-identical between the live and warm passes
    for d in 0..6 {
        for (method, method_str) in WORLD_METHODS {
            let run_id = format!("d{d}-{method_str}");
            let dir1 = tmp.path().join(format!("pass1/{run_id}/{run_id}"));
            let dir2 = tmp.path().join(format!("pass2/{run_id}/{run_id}"));
            for file in ["records.jsonl", "predictions.jsonl"] {
                assert_eq!(
                    read_bytes(&dir1.join(file)),
                    read_bytes(&dir2.join(file)),
                    "{run_id}/{file} differs between passes"
                );
            }
            if is_committee(method) {
                assert_eq!(
                    read_bytes(&dir1.join("transcripts.jsonl")),
                    read_bytes(&dir2.join("transcripts.jsonl")),
                    "{run_id}/transcripts.jsonl differs between passes"
                );
            }
        }
    }
    assert_eq!(eval_csvs[0], eval_csvs[1], "evaluation CSVs differ between passes");
    println!("criterion 5 (warm-replay determinism): pass");
}

// --------------------------------------- criterion 6: ledger exactness

#[test]
fn criterion_6_ledger_exactness() {
    // 10,000 fuzzed entries summed two ways: the shipped decimal fold and an
    // independent integer accumulator in atto-dollars
    let mut state = 0x1ED6_E12Au64;
    let mut entries = Vec::with_capacity(10_000);
    let mut atto_total: i128 = 0; // 1 USD = 10^18 atto
    for k in 0..10_000u32 {
        let input_tokens = rng_below(&mut state, 5_000);
        let output_tokens = rng_below(&mut state, 5_000);
        // prices in USD per million tokens with six decimal places
        let pi = rng_below(&mut state, 10_000_000) as i64;
        let po = rng_below(&mut state, 10_000_000) as i64;
        let price = ModelPrice {
            input_per_million: Decimal::new(pi, 6),
            output_per_million: Decimal::new(po, 6),
        };
        let usage = TokenUsage::new(input_tokens, output_tokens);
        let cost = cost_of(usage, price);
        // per-token price is (p * 10^-6) / 10^6 USD = p * 10^6 atto
        atto_total += i128::from(input_tokens) * i128::from(pi) * 1_000_000
            + i128::from(output_tokens) * i128::from(po) * 1_000_000;
        entries.push(LedgerEntry {
            run_id: "fuzz".into(),
            instance_id: format!("i{}", k % 97),
            agent_id: "a1".into(),
            method: MethodName::Vanilla,
            round: 0,
            sample_index: 0,
            provider_id: "lab".into(),
            model_id: "m1".into(),
            usage,
            cost_usd: cost,
            nominal_cost_usd: cost,
            cached: false,
            retries: 0,
            timestamp_ms: u64::from(k),
        });
    }
    let summary = summarize(&entries);
    assert_eq!(
        summary.total_usd,
        Decimal::from_i128_with_scale(atto_total, 18),
        "decimal fold drifted from the integer oracle"
    );
    let instance_sum: Decimal = summary.by_instance.values().copied().sum();
    assert_eq!(summary.total_usd, instance_sum, "total is not the sum of its parts");
    assert_eq!(summary.nominal_total_usd, summary.total_usd);
    assert_eq!(summary.calls, 10_000);

    // Pareto flags on 100 random tables vs. the quadratic dominance oracle
    let dominated = |points: &[CostPoint], i: usize| -> bool {
        points.iter().enumerate().any(|(j, q)| {
            j != i
                && q.nominal_cost_usd <= points[i].nominal_cost_usd
                && q.accuracy_pct >= points[i].accuracy_pct
                && (q.nominal_cost_usd < points[i].nominal_cost_usd
                    || q.accuracy_pct > points[i].accuracy_pct)
        })
    };
    for table in 0..100 {
        let n = 1 + rng_below(&mut state, 12) as usize;
        let points: Vec<CostPoint> = (0..n)
            .map(|i| {
                let acc = rng_below(&mut state, 1001) as f64 / 10.0;
                let cost = Decimal::new(rng_below(&mut state, 10_000) as i64, 4);
                CostPoint {
                    label: format!("t{table}-p{i}"),
                    method: MethodName::Vanilla,
                    accuracy_pct: acc,
                    cost_usd: cost,
                    nominal_cost_usd: cost,
                }
            })
            .collect();
        let rows = cost_effectiveness_table(points.clone());
        assert_eq!(rows.len(), points.len());
        for row in &rows {
            let idx = points.iter().position(|p| p.label == row.point.label).unwrap();
            assert_eq!(
                row.pareto,
                !dominated(&points, idx),
                "table {table}: {} pareto flag disagrees with oracle",
                row.point.label
            );
        }
    }
    println!("criterion 6 (ledger exactness): pass");
}

// ------------------------------------- criterion 7: round-curve soundness

/// Integer round-half-up percentage at one decimal, recomputed from scratch.
fn pct_tenths(num: usize, den: usize) -> String {
    assert!(den > 0);
    let scaled = num * 1000;
    let mut tenths = scaled / den;
    if 2 * (scaled % den) >= den {
        tenths += 1;
    }
    format!("{}.{}", tenths / 10, tenths % 10)
}

#[test]
fn criterion_7_round_curve_soundness() {
    let tmp = tempfile::tempdir().unwrap();
    let world = World::new(tmp.path(), 1);
    let manifest_path = world.manifest(
        "d0-peer_discussion",
        "d0.jsonl",
        MethodName::PeerDiscussion,
        "peer_discussion",
        "runs/d0-peer_discussion",
        "cache/d0-peer_discussion",
        true,
    );
    let run = prepare(&manifest_path).unwrap();
    let report = execute(&run).unwrap();
    assert_eq!(report.info.failed, 0);

    let out = tmp.path().join("reports");
    fs::create_dir_all(&out).unwrap();
    cmd_evaluate(&[run.run_dir.clone()], None, &out, 17, 1_000).unwrap();
    cmd_report(&[run.run_dir.clone()], &out).unwrap();

    let csv_text =
        fs::read_to_string(out.join("round_curves_d0-peer_discussion.csv")).unwrap();
    let mut lines = csv_text.lines();
    assert_eq!(lines.next(), Some("round,series,accuracy_pct"));
    let emitted: Vec<(u32, String, String)> = lines
        .map(|l| {
            let mut parts = l.splitn(3, ',');
            (
                parts.next().unwrap().parse().unwrap(),
                parts.next().unwrap().to_string(),
                parts.next().unwrap().to_string(),
            )
        })
        .collect();

    // recompute the whole grid from the raw transcripts, carry-forward done
    // by hand: a settled instance keeps its last round's labels
    let loaded = LoadedRun::load(&run.run_dir).unwrap();
    let transcripts = loaded.transcripts().unwrap();
    assert_eq!(transcripts.len(), 6);
    let gold = |id: &str| {
        loaded
            .instances
            .iter()
            .find(|i| i.instance_id == id)
            .and_then(|i| i.gold_label.clone())
            .unwrap()
    };
    // max_discussion_rounds = 2 so the grid spans rounds 0..=2; the
    // never-agreeing instances actually run all three
    let total_rounds = 3usize;
    assert!(transcripts.iter().any(|t| t.rounds.len() == total_rounds));
    assert!(
        transcripts.iter().any(|t| t.rounds.len() < total_rounds),
        "need at least one early-consensus instance to exercise carry-forward"
    );
    let agents = ["a1", "a2", "a3"];
    let space = ["alpha", "beta", "gamma"];
    let mut expected = Vec::new();
    for r in 0..total_rounds {
        for (a, agent) in agents.iter().enumerate() {
            let correct = transcripts
                .iter()
                .filter(|t| {
                    let src = r.min(t.rounds.len() - 1);
                    t.rounds[src][a].parsed_label.as_valid()
                        == Some(gold(&t.instance_id).as_str())
                })
                .count();
            expected.push((r as u32, agent.to_string(), pct_tenths(correct, 6)));
        }
        let correct_majority = transcripts
            .iter()
            .filter(|t| {
                let src = r.min(t.rounds.len() - 1);
                let mut counts = [0u32; 3];
                for rec in &t.rounds[src] {
                    if let Some(l) = rec.parsed_label.as_valid() {
                        if let Some(i) = space.iter().position(|s| *s == l) {
                            counts[i] += 1;
                        }
                    }
                }
                first_max(&counts).map(|i| space[i]) == Some(gold(&t.instance_id).as_str())
            })
            .count();
        expected.push((r as u32, "majority_vote".to_string(), pct_tenths(correct_majority, 6)));
    }
    assert_eq!(emitted, expected, "curve grid disagrees with the recomputation");

    // the majority curve's last point is the run's headline accuracy
    let eval: EvalFile =
        serde_json::from_str(&fs::read_to_string(run.run_dir.join("eval.json")).unwrap()).unwrap();
    let last_majority = expected
        .iter()
        .rev()
        .find(|(_, s, _)| s == "majority_vote")
        .unwrap();
    assert_eq!(last_majority.2, format!("{:.1}", eval.result.accuracy_pct));
    println!("criterion 7 (round-curve soundness): pass");
}

// ----------------------------------------- criterion 8: cost-shape suite

#[test]
fn criterion_8_cost_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let world = World::new(tmp.path(), 1);
    // output-only pricing so prompt growth across rounds cannot blur the
    // shape: every scripted reply is exactly two whitespace tokens
    let mut pricing = String::new();
    for m in ["m1", "m2", "m3"] {
        pricing.push_str(&format!(
            "[[models]]\nprovider = \"lab\"\nmodel = \"{m}\"\ninput_per_million = \"0\"\noutput_per_million = \"4.00\"\n\n"
        ));
    }
    fs::write(world.root.join("pricing.toml"), pricing).unwrap();
    let script = serde_json::json!({
        "rules": [
            {"agent_id": "a2", "reply": "Answer: beta"},
            {"agent_id": "a3", "reply": "Answer: gamma"},
            {"reply": "Answer: alpha"}
        ]
    });
    fs::write(world.root.join("script.json"), serde_json::to_string_pretty(&script).unwrap())
        .unwrap();

    let per_call = Decimal::new(2, 0) * Decimal::new(400, 2) / Decimal::new(1_000_000, 0);
    // cache off: every call must hit the provider so ledger cost is the true
    // live worst case, not discounted by identical rework prompts
    let mean_of = |method: MethodName, method_str: &str| -> (Decimal, Vec<Decimal>) {
        let manifest_path = world.manifest(
            &format!("cost-{method_str}"),
            "d0.jsonl",
            method,
            method_str,
            &format!("runs/cost-{method_str}"),
            &format!("cache/cost-{method_str}"),
            false,
        );
        let run = prepare(&manifest_path).unwrap();
        let report = execute(&run).unwrap();
        assert_eq!(report.info.failed, 0);
        let loaded = LoadedRun::load(&run.run_dir).unwrap();
        let summary = summarize(&loaded.ledger_entries().unwrap());
        (
            summary.mean_per_instance(),
            summary.by_instance.values().copied().collect(),
        )
    };

    let (vanilla_mean, vanilla_each) = mean_of(MethodName::Vanilla, "vanilla");
    assert_eq!(vanilla_mean, per_call, "vanilla is one call per instance");
    assert!(vanilla_each.iter().all(|c| *c == per_call));

    let (sc_mean, sc_each) = mean_of(MethodName::SelfConsistency, "self_consistency");
    assert_eq!(sc_mean, per_call * Decimal::from(5), "five samples per instance");
    assert!(sc_each.iter().all(|c| *c == per_call * Decimal::from(5)));
    assert!(
        sc_mean >= vanilla_mean * Decimal::from(3),
        "sampling must cost at least three vanilla passes"
    );

    // every discussion runs to the cap (the roster never agrees), so each
    // instance costs exactly roster * (max_rounds + 1) single calls
    let (pd_mean, pd_each) = mean_of(MethodName::PeerDiscussion, "peer_discussion");
    let worst_case = per_call * Decimal::from(3 * (2 + 1));
    assert_eq!(pd_mean, worst_case);
    assert!(pd_each.iter().all(|c| *c == worst_case), "per-instance discussion cost");
    println!("criterion 8 (cost-shape suite): pass");
}
