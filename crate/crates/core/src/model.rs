//! Core domain types: label spaces, tasks, instances, records, method config.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Sentinel name reserved for unparseable model output; never a real label.
pub const INVALID_SENTINEL: &str = "invalid";

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("label space must contain at least one label")]
    EmptyLabelSpace,
    #[error("label {0:?} normalizes to the empty string")]
    BlankLabel(String),
    #[error("label {0:?} collides with the reserved invalid sentinel")]
    ReservedLabel(String),
    #[error("labels {0:?} and {1:?} normalize to the same form")]
    DuplicateLabel(String, String),
    #[error("task field {0} must be non-empty")]
    EmptyTaskField(&'static str),
    #[error("method {method} requires {need}, got {got}")]
    BadConfig {
        method: MethodName,
        need: &'static str,
        got: String,
    },
    #[error("agent roster entry {0} has an empty field")]
    BadAgent(usize),
    #[error("duplicate agent id {0:?} in roster")]
    DuplicateAgent(String),
}

/// Lowercase, trim surrounding whitespace/punctuation, collapse inner runs of
/// whitespace to single spaces. Idempotent.
pub fn normalize_text(s: &str) -> String {
    let lowered = s.to_lowercase();
    let stripped = lowered.trim_matches(|c: char| !c.is_alphanumeric());
    let mut out = String::with_capacity(stripped.len());
    for part in stripped.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(part);
    }
    out
}

/// True when `needle` occurs in `haystack` delimited by non-alphanumeric
/// characters (or string edges) on both sides.
fn contains_whole_word(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let mut start = 0;
    while let Some(pos) = haystack[start..].find(needle) {
        let abs = start + pos;
        let before_ok = haystack[..abs]
            .chars()
            .next_back()
            .map_or(true, |c| !c.is_alphanumeric());
        let end = abs + needle.len();
        let after_ok = haystack[end..]
            .chars()
            .next()
            .map_or(true, |c| !c.is_alphanumeric());
        if before_ok && after_ok {
            return true;
        }
        let step = haystack[abs..].chars().next().map_or(1, char::len_utf8);
        start = abs + step;
    }
    false
}

/// The closed set of labels a task allows, with a domain tag for the expert
/// persona. Labels keep their display form; matching is done on normalized
/// forms, which are unique within a space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    labels: Vec<String>,
    normalized: Vec<String>,
    domain_tag: String,
}

impl LabelSpace {
    pub fn new(labels: Vec<String>, domain_tag: impl Into<String>) -> Result<Self, ModelError> {
        if labels.is_empty() {
            return Err(ModelError::EmptyLabelSpace);
        }
        let labels: Vec<String> = labels.into_iter().map(|l| l.trim().to_string()).collect();
        let mut normalized = Vec::with_capacity(labels.len());
        for label in &labels {
            let norm = normalize_text(label);
            if norm.is_empty() {
                return Err(ModelError::BlankLabel(label.clone()));
            }
            if norm == INVALID_SENTINEL {
                return Err(ModelError::ReservedLabel(label.clone()));
            }
            if let Some(i) = normalized.iter().position(|n| n == &norm) {
                return Err(ModelError::DuplicateLabel(labels[i].clone(), label.clone()));
            }
            normalized.push(norm);
        }
        Ok(Self {
            labels,
            normalized,
            domain_tag: domain_tag.into(),
        })
    }

    /// Labels in declaration order (the tie-break order everywhere).
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn domain_tag(&self) -> &str {
        &self.domain_tag
    }

    /// Index of the label whose normalized form equals `normalize_text(name)`.
    pub fn position(&self, name: &str) -> Option<usize> {
        let norm = normalize_text(name);
        self.normalized.iter().position(|n| n == &norm)
    }

    /// Canonical display form for any spelling of a label in this space.
    pub fn canonical(&self, name: &str) -> Option<&str> {
        self.position(name).map(|i| self.labels[i].as_str())
    }

    pub(crate) fn normalized(&self) -> &[String] {
        &self.normalized
    }
}

/// Map raw model output onto the label space.
///
/// Resolution order: exact normalized equality with some label; otherwise a
/// whole-word containment scan. Containment resolves only when exactly one
/// label matches; zero or several matches yield [`ParsedLabel::Invalid`].
pub fn normalize_label(raw: &str, space: &LabelSpace) -> ParsedLabel {
    let norm = normalize_text(raw);
    if norm.is_empty() {
        return ParsedLabel::Invalid;
    }
    if let Some(i) = space.normalized().iter().position(|n| n == &norm) {
        return ParsedLabel::Valid(space.labels()[i].clone());
    }
    let mut hit: Option<usize> = None;
    for (i, cand) in space.normalized().iter().enumerate() {
        if contains_whole_word(&norm, cand) {
            if hit.is_some() {
                return ParsedLabel::Invalid;
            }
            hit = Some(i);
        }
    }
    match hit {
        Some(i) => ParsedLabel::Valid(space.labels()[i].clone()),
        None => ParsedLabel::Invalid,
    }
}

/// Outcome of label extraction: a canonical label or the invalid sentinel.
///
/// Serializes as `Option<String>` (`null` for invalid), which is how records
/// and predictions are persisted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Option<String>", into = "Option<String>")]
pub enum ParsedLabel {
    Valid(String),
    Invalid,
}

impl ParsedLabel {
    pub fn as_valid(&self) -> Option<&str> {
        match self {
            ParsedLabel::Valid(s) => Some(s),
            ParsedLabel::Invalid => None,
        }
    }

    pub fn is_valid(&self) -> bool {
        matches!(self, ParsedLabel::Valid(_))
    }
}

impl From<Option<String>> for ParsedLabel {
    fn from(v: Option<String>) -> Self {
        match v {
            Some(s) => ParsedLabel::Valid(s),
            None => ParsedLabel::Invalid,
        }
    }
}

impl From<ParsedLabel> for Option<String> {
    fn from(v: ParsedLabel) -> Self {
        match v {
            ParsedLabel::Valid(s) => Some(s),
            ParsedLabel::Invalid => None,
        }
    }
}

impl fmt::Display for ParsedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParsedLabel::Valid(s) => f.write_str(s),
            ParsedLabel::Invalid => f.write_str("INVALID"),
        }
    }
}

/// An annotation task: what to label, how, and over which label space.
#[derive(Debug, Clone)]
pub struct AnnotationTask {
    task_id: String,
    task_description: String,
    guideline: String,
    label_space: LabelSpace,
}

impl AnnotationTask {
    pub fn new(
        task_id: impl Into<String>,
        task_description: impl Into<String>,
        guideline: impl Into<String>,
        label_space: LabelSpace,
    ) -> Result<Self, ModelError> {
        let task_id = task_id.into();
        let task_description = task_description.into();
        let guideline = guideline.into();
        if task_id.trim().is_empty() {
            return Err(ModelError::EmptyTaskField("task_id"));
        }
        if task_description.trim().is_empty() {
            return Err(ModelError::EmptyTaskField("task_description"));
        }
        if guideline.trim().is_empty() {
            return Err(ModelError::EmptyTaskField("guideline"));
        }
        Ok(Self {
            task_id,
            task_description,
            guideline,
            label_space,
        })
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn task_description(&self) -> &str {
        &self.task_description
    }

    pub fn guideline(&self) -> &str {
        &self.guideline
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }
}

/// One dataset row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub instance_id: String,
    pub payload: String,
    #[serde(default)]
    pub gold_label: Option<String>,
}

/// The annotation strategies the workbench implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Vanilla,
    Cot,
    SelfConsistency,
    SelfRefine,
    MajorityVoteVanilla,
    MajorityVoteCot,
    PeerDiscussion,
}

impl MethodName {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodName::Vanilla => "vanilla",
            MethodName::Cot => "cot",
            MethodName::SelfConsistency => "self_consistency",
            MethodName::SelfRefine => "self_refine",
            MethodName::MajorityVoteVanilla => "majority_vote_vanilla",
            MethodName::MajorityVoteCot => "majority_vote_cot",
            MethodName::PeerDiscussion => "peer_discussion",
        }
    }

    pub fn all() -> [MethodName; 7] {
        [
            MethodName::Vanilla,
            MethodName::Cot,
            MethodName::SelfConsistency,
            MethodName::SelfRefine,
            MethodName::MajorityVoteVanilla,
            MethodName::MajorityVoteCot,
            MethodName::PeerDiscussion,
        ]
    }

    /// True for methods that run a roster of agents rather than a single one.
    pub fn is_committee(&self) -> bool {
        matches!(
            self,
            MethodName::MajorityVoteVanilla
                | MethodName::MajorityVoteCot
                | MethodName::PeerDiscussion
        )
    }

    pub fn parse(s: &str) -> Option<MethodName> {
        MethodName::all().into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for MethodName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One agent in a roster: a stable id bound to a provider/model pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub agent_id: String,
    #[serde(rename = "provider")]
    pub provider_id: String,
    #[serde(rename = "model")]
    pub model_id: String,
}

fn default_sc_samples() -> u32 {
    5
}
fn default_sc_temperature() -> f64 {
    0.7
}
fn default_greedy_temperature() -> f64 {
    0.0
}
fn default_max_discussion_rounds() -> u32 {
    2
}
fn default_max_output_tokens() -> u32 {
    1024
}

/// Everything a method run needs besides the task and dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: MethodName,
    pub agent_roster: Vec<AgentSpec>,
    #[serde(default = "default_sc_samples")]
    pub sc_samples: u32,
    #[serde(default = "default_sc_temperature")]
    pub sc_temperature: f64,
    #[serde(default = "default_greedy_temperature")]
    pub greedy_temperature: f64,
    #[serde(default = "default_max_discussion_rounds")]
    pub max_discussion_rounds: u32,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
}

impl MethodConfig {
    /// Config with the standard defaults (5 samples at 0.7 for
    /// self-consistency, greedy elsewhere, two discussion rounds).
    pub fn new(method: MethodName, agent_roster: Vec<AgentSpec>) -> Self {
        Self {
            method,
            agent_roster,
            sc_samples: default_sc_samples(),
            sc_temperature: default_sc_temperature(),
            greedy_temperature: default_greedy_temperature(),
            max_discussion_rounds: default_max_discussion_rounds(),
            max_output_tokens: default_max_output_tokens(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (i, agent) in self.agent_roster.iter().enumerate() {
            if agent.agent_id.trim().is_empty()
                || agent.provider_id.trim().is_empty()
                || agent.model_id.trim().is_empty()
            {
                return Err(ModelError::BadAgent(i));
            }
            if self.agent_roster[..i]
                .iter()
                .any(|a| a.agent_id == agent.agent_id)
            {
                return Err(ModelError::DuplicateAgent(agent.agent_id.clone()));
            }
        }
        let roster = self.agent_roster.len();
        let single = matches!(
            self.method,
            MethodName::Vanilla
                | MethodName::Cot
                | MethodName::SelfConsistency
                | MethodName::SelfRefine
        );
        if single && roster != 1 {
            return Err(ModelError::BadConfig {
                method: self.method,
                need: "exactly one roster agent",
                got: roster.to_string(),
            });
        }
        if !single && roster == 0 {
            return Err(ModelError::BadConfig {
                method: self.method,
                need: "a non-empty agent roster",
                got: "0".into(),
            });
        }
        if self.method == MethodName::SelfConsistency {
            if self.sc_samples < 2 {
                return Err(ModelError::BadConfig {
                    method: self.method,
                    need: "sc_samples >= 2",
                    got: self.sc_samples.to_string(),
                });
            }
            if !(self.sc_temperature > 0.0) {
                return Err(ModelError::BadConfig {
                    method: self.method,
                    need: "sc_temperature > 0",
                    got: self.sc_temperature.to_string(),
                });
            }
        }
        if !(self.greedy_temperature >= 0.0) {
            return Err(ModelError::BadConfig {
                method: self.method,
                need: "greedy_temperature >= 0",
                got: self.greedy_temperature.to_string(),
            });
        }
        if self.max_output_tokens == 0 {
            return Err(ModelError::BadConfig {
                method: self.method,
                need: "max_output_tokens >= 1",
                got: "0".into(),
            });
        }
        Ok(())
    }
}

/// One model call's contribution to an annotation, as persisted in run output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub instance_id: String,
    pub agent_id: String,
    pub method: MethodName,
    pub round: u32,
    pub sample_index: u32,
    pub raw_output: String,
    pub parsed_label: ParsedLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    pub usage: crate::provider::TokenUsage,
}

/// A dataset problem found by validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateInstanceId { instance_id: String, index: usize },
    EmptyInstanceId { index: usize },
    EmptyPayload { instance_id: String, index: usize },
    GoldOutsideSpace { instance_id: String, index: usize, gold_label: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateInstanceId { instance_id, index } => {
                write!(f, "row {index}: duplicate instance_id {instance_id:?}")
            }
            Violation::EmptyInstanceId { index } => {
                write!(f, "row {index}: empty instance_id")
            }
            Violation::EmptyPayload { instance_id, index } => {
                write!(f, "row {index}: instance {instance_id:?} has an empty payload")
            }
            Violation::GoldOutsideSpace {
                instance_id,
                index,
                gold_label,
            } => write!(
                f,
                "row {index}: instance {instance_id:?} gold label {gold_label:?} is outside the label space"
            ),
        }
    }
}

/// Full list of dataset violations; empty means the dataset is clean.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every instance against the label space. Never short-circuits: the
/// report lists all violations in row order.
pub fn validate_dataset(instances: &[Instance], space: &LabelSpace) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for (index, inst) in instances.iter().enumerate() {
        if inst.instance_id.trim().is_empty() {
            report.violations.push(Violation::EmptyInstanceId { index });
        } else if seen.insert(&inst.instance_id, index).is_some() {
            report.violations.push(Violation::DuplicateInstanceId {
                instance_id: inst.instance_id.clone(),
                index,
            });
        }
        if inst.payload.trim().is_empty() {
            report.violations.push(Violation::EmptyPayload {
                instance_id: inst.instance_id.clone(),
                index,
            });
        }
        if let Some(gold) = &inst.gold_label {
            if space.position(gold).is_none() {
                report.violations.push(Violation::GoldOutsideSpace {
                    instance_id: inst.instance_id.clone(),
                    index,
                    gold_label: gold.clone(),
                });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space(labels: &[&str]) -> LabelSpace {
        LabelSpace::new(labels.iter().map(|s| s.to_string()).collect(), "testing").unwrap()
    }

    #[test]
    fn normalize_text_strips_case_punctuation_whitespace() {
        assert_eq!(normalize_text("  Hawkish. "), "hawkish");
        assert_eq!(normalize_text("**Neutral**"), "neutral");
        assert_eq!(normalize_text("no    relation"), "no relation");
        assert_eq!(normalize_text("person:employee_of"), "person:employee_of");
        assert_eq!(normalize_text("..."), "");
    }

    #[test]
    fn label_space_rejects_bad_inputs() {
        assert!(matches!(
            LabelSpace::new(vec![], "x"),
            Err(ModelError::EmptyLabelSpace)
        ));
        assert!(matches!(
            LabelSpace::new(vec!["Dovish".into(), "dovish.".into()], "x"),
            Err(ModelError::DuplicateLabel(..))
        ));
        assert!(matches!(
            LabelSpace::new(vec!["Invalid".into()], "x"),
            Err(ModelError::ReservedLabel(..))
        ));
        assert!(matches!(
            LabelSpace::new(vec!["??".into()], "x"),
            Err(ModelError::BlankLabel(..))
        ));
    }

    #[test]
    fn normalize_label_exact_match_beats_containment() {
        let sp = space(&["Relevant", "Not Relevant"]);
        assert_eq!(
            normalize_label("not relevant", &sp),
            ParsedLabel::Valid("Not Relevant".into())
        );
        assert_eq!(
            normalize_label("RELEVANT.", &sp),
            ParsedLabel::Valid("Relevant".into())
        );
    }

    #[test]
    fn normalize_label_containment_requires_unique_whole_word() {
        let sp = space(&["Dovish", "Hawkish", "Neutral"]);
        assert_eq!(
            normalize_label("The stance is Dovish here", &sp),
            ParsedLabel::Valid("Dovish".into())
        );
        // two labels mentioned: ambiguous
        assert_eq!(
            normalize_label("either Dovish or Hawkish", &sp),
            ParsedLabel::Invalid
        );
        // substring is not a whole word
        let sp2 = space(&["art"]);
        assert_eq!(normalize_label("this is artful", &sp2), ParsedLabel::Invalid);
        assert_eq!(
            normalize_label("about art, mostly", &sp2),
            ParsedLabel::Valid("art".into())
        );
    }

    #[test]
    fn normalize_label_multiword_containment() {
        let sp = space(&["No Relation", "Employee Of"]);
        assert_eq!(
            normalize_label("I would say: no relation", &sp),
            ParsedLabel::Valid("No Relation".into())
        );
    }

    #[test]
    fn parsed_label_serializes_as_option() {
        let v = ParsedLabel::Valid("Dovish".into());
        assert_eq!(serde_json::to_string(&v).unwrap(), "\"Dovish\"");
        assert_eq!(serde_json::to_string(&ParsedLabel::Invalid).unwrap(), "null");
        let back: ParsedLabel = serde_json::from_str("null").unwrap();
        assert_eq!(back, ParsedLabel::Invalid);
    }

    #[test]
    fn method_name_round_trips() {
        for m in MethodName::all() {
            assert_eq!(MethodName::parse(m.as_str()), Some(m));
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.as_str()));
        }
    }

    #[test]
    fn config_validation_enforces_roster_shape() {
        let one = vec![AgentSpec {
            agent_id: "a".into(),
            provider_id: "mock".into(),
            model_id: "m".into(),
        }];
        let two = vec![
            one[0].clone(),
            AgentSpec {
                agent_id: "b".into(),
                provider_id: "mock".into(),
                model_id: "m".into(),
            },
        ];
        assert!(MethodConfig::new(MethodName::Vanilla, one.clone()).validate().is_ok());
        assert!(MethodConfig::new(MethodName::Vanilla, two.clone()).validate().is_err());
        assert!(MethodConfig::new(MethodName::PeerDiscussion, one.clone()).validate().is_ok());
        assert!(MethodConfig::new(MethodName::MajorityVoteCot, vec![]).validate().is_err());

        let mut sc = MethodConfig::new(MethodName::SelfConsistency, one.clone());
        sc.sc_samples = 1;
        assert!(sc.validate().is_err());
        sc.sc_samples = 5;
        sc.sc_temperature = 0.0;
        assert!(sc.validate().is_err());

        let mut dup = MethodConfig::new(MethodName::PeerDiscussion, two);
        dup.agent_roster[1].agent_id = "a".into();
        assert!(matches!(dup.validate(), Err(ModelError::DuplicateAgent(_))));
    }

    #[test]
    fn validation_reports_every_violation() {
        let sp = space(&["Yes", "No"]);
        let rows = vec![
            Instance {
                instance_id: "i1".into(),
                payload: "text".into(),
                gold_label: Some("Yes".into()),
            },
            Instance {
                instance_id: "i1".into(),
                payload: "".into(),
                gold_label: Some("Maybe".into()),
            },
            Instance {
                instance_id: "  ".into(),
                payload: "ok".into(),
                gold_label: None,
            },
        ];
        let report = validate_dataset(&rows, &sp);
        assert_eq!(report.violations.len(), 4);
        assert!(!report.is_clean());
        assert!(report.violations.iter().any(|v| matches!(
            v,
            Violation::DuplicateInstanceId { index: 1, .. }
        )));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::EmptyPayload { index: 1, .. })));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::GoldOutsideSpace { index: 1, .. })));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::EmptyInstanceId { index: 2 })));
    }

    #[test]
    fn gold_labels_match_canonically() {
        let sp = space(&["Dovish", "Hawkish"]);
        let rows = vec![Instance {
            instance_id: "i1".into(),
            payload: "text".into(),
            gold_label: Some("  dovish ".into()),
        }];
        assert!(validate_dataset(&rows, &sp).is_clean());
    }

    proptest! {
        #[test]
        fn normalize_text_is_idempotent(s in "\\PC{0,60}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once.clone());
            prop_assert!(!once.starts_with(' ') && !once.ends_with(' '));
            prop_assert!(!once.contains("  "));
        }

        #[test]
        fn normalize_label_total_and_canonical(raw in "\\PC{0,40}") {
            let sp = space(&["Dovish", "Hawkish", "Neutral"]);
            match normalize_label(&raw, &sp) {
                ParsedLabel::Valid(l) => prop_assert!(sp.labels().contains(&l)),
                ParsedLabel::Invalid => {}
            }
        }

        #[test]
        fn labels_always_parse_to_themselves(idx in 0usize..3) {
            let sp = space(&["Dovish", "Hawkish", "Neutral"]);
            let l = sp.labels()[idx].clone();
            prop_assert_eq!(normalize_label(&l, &sp), ParsedLabel::Valid(l));
        }
    }
}
