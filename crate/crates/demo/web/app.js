import init, { run_annotation, compare_methods, cost_frontier } from "./pkg/labelcrew_demo.js";

const $ = (id) => document.getElementById(id);

// A committee that splits on two instances: f2 converges after one rework
// round, f4 never agrees and falls back to a plurality vote.
const setup = {
  task: {
    task_id: "stance",
    task_description: "Classify the monetary-policy stance of the statement.",
    guideline: "Dovish favors easing, Hawkish favors tightening, Neutral is neither.",
    labels: ["Dovish", "Hawkish", "Neutral"],
    domain_tag: "finance",
  },
  instances: [
    { instance_id: "f1", payload: "Rates must rise until inflation is beaten.", gold_label: "Hawkish" },
    { instance_id: "f2", payload: "Further asset purchases may be warranted.", gold_label: "Dovish" },
    { instance_id: "f3", payload: "The committee will monitor incoming data.", gold_label: "Neutral" },
    { instance_id: "f4", payload: "Policy is restrictive, yet prices keep climbing.", gold_label: "Hawkish" },
  ],
  method: {
    method: "peer_discussion",
    max_discussion_rounds: 2,
    agent_roster: [
      { agent_id: "a1", provider: "mock", model: "m-small" },
      { agent_id: "a2", provider: "mock", model: "m-medium" },
      { agent_id: "a3", provider: "mock", model: "m-large" },
    ],
  },
  script: {
    rules: [
      { instance_id: "f1", reply: "Tightening language. Answer: Hawkish" },
      { instance_id: "f2", agent_id: "a2", round: 0, reply: "Answer: Neutral" },
      { instance_id: "f2", reply: "Purchases mean easing. Answer: Dovish" },
      { instance_id: "f3", reply: "No lean either way. Answer: Neutral" },
      { instance_id: "f4", agent_id: "a1", reply: "Answer: Hawkish" },
      { instance_id: "f4", agent_id: "a2", reply: "Answer: Hawkish" },
      { instance_id: "f4", agent_id: "a3", reply: "Answer: Neutral" },
    ],
  },
  pricing: [
    { provider: "mock", model: "m-small", input_per_million: "0.40", output_per_million: "1.60" },
    { provider: "mock", model: "m-medium", input_per_million: "2.50", output_per_million: "10.00" },
    { provider: "mock", model: "m-large", input_per_million: "5.00", output_per_million: "15.00" },
  ],
};

// 40 paired outcomes: the candidate fixes ten instances and loses two.
const baseline = Array.from({ length: 40 }, (_, i) => i >= 12);
const candidate = baseline.map((b, i) => (i < 10 ? true : b));
candidate[38] = false;
candidate[39] = false;

const frontier = [
  { label: "run-a", method: "vanilla", accuracy_pct: 61.5, cost_usd: "0.0312" },
  { label: "run-b", method: "cot", accuracy_pct: 66.0, cost_usd: "0.0489" },
  { label: "run-c", method: "majority_vote_cot", accuracy_pct: 65.2, cost_usd: "0.1534" },
  { label: "run-d", method: "self_consistency", accuracy_pct: 68.5, cost_usd: "0.1267" },
  { label: "run-e", method: "peer_discussion", accuracy_pct: 71.0, cost_usd: "0.3190", nominal_cost_usd: "0.4410" },
];

function hook(btnId, outId, fn) {
  $(btnId).addEventListener("click", () => {
    const out = $(outId);
    try {
      out.textContent = fn();
      out.classList.remove("err");
    } catch (e) {
      out.textContent = String(e);
      out.classList.add("err");
    }
  });
}

await init();

$("run-input").value = JSON.stringify(setup, null, 2);
$("cand").value = JSON.stringify(candidate);
$("base").value = JSON.stringify(baseline);
$("frontier-input").value = JSON.stringify(frontier, null, 2);

hook("run-btn", "run-out", () => run_annotation($("run-input").value));
hook("cmp-btn", "cmp-out", () =>
  compare_methods(
    $("cand").value,
    $("base").value,
    Number($("resamples").value),
    BigInt($("seed").value || "0"),
  ),
);
hook("frontier-btn", "frontier-out", () => cost_frontier($("frontier-input").value));
