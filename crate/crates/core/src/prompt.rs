//! Prompt templates, label extraction, and discussion-history rendering.
//!
//! Templates are plain text with `{slot}` placeholders (`{{`/`}}` escape
//! literal braces). Defaults ship embedded; each can be overridden as long as
//! it only references slots the template is entitled to and keeps the final
//! `Answer: <label>` instruction, which is what label extraction keys on.

use crate::model::{normalize_label, normalize_text, AnnotationRecord, AnnotationTask, Instance, LabelSpace, ParsedLabel};
use crate::provider::ChatMessage;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template {template} references slot {{{slot}}} which is not available to it")]
    ForbiddenSlot { template: TemplateId, slot: String },
    #[error("template {template} references slot {{{slot}}} but no value was supplied")]
    UnfilledSlot { template: TemplateId, slot: String },
    #[error("call to template {template} supplied unexpected extra slot {slot:?}")]
    UnexpectedExtra { template: TemplateId, slot: String },
    #[error("call to template {template} is missing required extra slot {slot:?}")]
    MissingExtra { template: TemplateId, slot: String },
    #[error("template {template} has an unclosed or empty slot reference")]
    MalformedSlot { template: TemplateId },
    #[error("template {template} has a stray unescaped brace")]
    StrayBrace { template: TemplateId },
    #[error("template {template} must instruct the model to end with an `Answer:` line")]
    MissingAnswerInstruction { template: TemplateId },
    #[error("discussion history needs at least one record")]
    EmptyDiscussion,
}

/// The seven prompt shapes the strategies use, plus an id for the system
/// message template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Vanilla,
    Cot,
    RefineGenerate,
    RefineReview,
    RefineRefine,
    DiscussInitial,
    DiscussRework,
}

impl TemplateId {
    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateId::Vanilla => "vanilla",
            TemplateId::Cot => "cot",
            TemplateId::RefineGenerate => "refine_generate",
            TemplateId::RefineReview => "refine_review",
            TemplateId::RefineRefine => "refine_refine",
            TemplateId::DiscussInitial => "discuss_initial",
            TemplateId::DiscussRework => "discuss_rework",
        }
    }

    pub fn all() -> [TemplateId; 7] {
        [
            TemplateId::Vanilla,
            TemplateId::Cot,
            TemplateId::RefineGenerate,
            TemplateId::RefineReview,
            TemplateId::RefineRefine,
            TemplateId::DiscussInitial,
            TemplateId::DiscussRework,
        ]
    }

    /// Extra slots the template requires beyond the base task/instance slots.
    pub fn required_extras(&self) -> &'static [&'static str] {
        match self {
            TemplateId::RefineReview => &["draft"],
            TemplateId::RefineRefine => &["draft", "feedback"],
            TemplateId::DiscussRework => &["discussion_history"],
            _ => &[],
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Slots every user template may reference.
const BASE_SLOTS: [&str; 5] = ["task_description", "guideline", "labels", "payload", "domain_tag"];

const SYSTEM_TEMPLATE: &str = "You are an expert annotator working in the {domain_tag} domain. \
Conduct the annotation as a domain expert of the relevant field, following the task guideline faithfully.";

const HEAD: &str = "## Task
{task_description}

## Guideline
{guideline}

## Labels
{labels}

## Sample
{payload}

";

const VANILLA_TEMPLATE: &str = "Assign exactly one label from the list above to the sample.
Reply with a single line of the form:
Answer: <label>";

const COT_TEMPLATE: &str = "Assign exactly one label from the list above to the sample.
Let's think step by step. Write out your reasoning, then finish with one line of the form:
Answer: <label>";

const REFINE_GENERATE_TEMPLATE: &str = "Assign exactly one label from the list above to the sample.
Produce a draft annotation: briefly explain your reasoning, then finish with one line of the form:
Answer: <label>";

const REFINE_REVIEW_TEMPLATE: &str = "## Your Draft
{draft}

Review your draft against the task and the guideline. Point out mistakes, \
overlooked evidence, or guideline clauses the draft ignored, then state the \
label you now believe is correct on one final line of the form:
Answer: <label>";

const REFINE_REFINE_TEMPLATE: &str = "## Your Draft
{draft}

## Your Review Feedback
{feedback}

Refine the draft by applying the feedback and produce the improved annotation. \
Finish with one line of the form:
Answer: <label>";

const DISCUSS_REWORK_TEMPLATE: &str = "## Discussion So Far
{discussion_history}

The annotators above (you are one of them) disagree on this sample. Weigh \
their reasoning against your own, then annotate the sample again.
Let's think step by step. Write out your reasoning, then finish with one line of the form:
Answer: <label>";

fn default_body(id: TemplateId) -> String {
    let tail = match id {
        TemplateId::Vanilla => VANILLA_TEMPLATE,
        TemplateId::Cot | TemplateId::DiscussInitial => COT_TEMPLATE,
        TemplateId::RefineGenerate => REFINE_GENERATE_TEMPLATE,
        TemplateId::RefineReview => REFINE_REVIEW_TEMPLATE,
        TemplateId::RefineRefine => REFINE_REFINE_TEMPLATE,
        TemplateId::DiscussRework => DISCUSS_REWORK_TEMPLATE,
    };
    format!("{HEAD}{tail}")
}

/// The system template plus one body per [`TemplateId`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    system: String,
    bodies: BTreeMap<TemplateId, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            system: SYSTEM_TEMPLATE.to_string(),
            bodies: TemplateId::all().into_iter().map(|id| (id, default_body(id))).collect(),
        }
    }
}

impl TemplateSet {
    pub fn body(&self, id: TemplateId) -> &str {
        &self.bodies[&id]
    }

    pub fn system(&self) -> &str {
        &self.system
    }

    /// Replace one template body. Rejects bodies that reference slots the
    /// template is not entitled to or drop the `Answer:` instruction.
    pub fn override_template(&mut self, id: TemplateId, body: impl Into<String>) -> Result<(), PromptError> {
        let body = body.into();
        let allowed: BTreeSet<&str> = BASE_SLOTS
            .iter()
            .copied()
            .chain(id.required_extras().iter().copied())
            .collect();
        for slot in referenced_slots(&body, id)? {
            if !allowed.contains(slot.as_str()) {
                return Err(PromptError::ForbiddenSlot { template: id, slot });
            }
        }
        if !body.contains("Answer:") {
            return Err(PromptError::MissingAnswerInstruction { template: id });
        }
        self.bodies.insert(id, body);
        Ok(())
    }

    /// Replace the system template (may reference `{domain_tag}` only).
    pub fn override_system(&mut self, body: impl Into<String>) -> Result<(), PromptError> {
        let body = body.into();
        for slot in referenced_slots(&body, TemplateId::Vanilla)? {
            if slot != "domain_tag" {
                return Err(PromptError::ForbiddenSlot { template: TemplateId::Vanilla, slot });
            }
        }
        self.system = body;
        Ok(())
    }
}

fn is_slot_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c == '_')
}

/// Slot names a body references, validating brace syntax as it goes.
fn referenced_slots(body: &str, id: TemplateId) -> Result<BTreeSet<String>, PromptError> {
    let mut slots = BTreeSet::new();
    expand_inner(body, id, |name| {
        slots.insert(name.to_string());
        Ok(String::new())
    })?;
    Ok(slots)
}

fn expand_inner(
    body: &str,
    id: TemplateId,
    mut fill: impl FnMut(&str) -> Result<String, PromptError>,
) -> Result<String, PromptError> {
    let mut out = String::with_capacity(body.len());
    let mut rest = body;
    while let Some(pos) = rest.find(['{', '}']) {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix("{{") {
            out.push('{');
            rest = after;
        } else if let Some(after) = tail.strip_prefix("}}") {
            out.push('}');
            rest = after;
        } else if let Some(after) = tail.strip_prefix('{') {
            let end = after.find('}').ok_or(PromptError::MalformedSlot { template: id })?;
            let name = &after[..end];
            if !is_slot_name(name) {
                return Err(PromptError::MalformedSlot { template: id });
            }
            out.push_str(&fill(name)?);
            rest = &after[end + 1..];
        } else {
            return Err(PromptError::StrayBrace { template: id });
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// One `- Label: gloss` line per label, in label-space order. Glosses come
/// from guideline lines of the form `Label: explanation`.
fn render_label_list(task: &AnnotationTask) -> String {
    let mut out = String::new();
    for label in task.label_space().labels() {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str("- ");
        out.push_str(label);
        if let Some(gloss) = find_gloss(task.guideline(), label) {
            out.push_str(": ");
            out.push_str(&gloss);
        }
    }
    out
}

fn find_gloss(guideline: &str, label: &str) -> Option<String> {
    let want = normalize_text(label);
    for line in guideline.lines() {
        let line = line.trim_start_matches(|c: char| c == '-' || c == '*' || c.is_whitespace());
        if let Some((head, tail)) = line.split_once(':') {
            if normalize_text(head) == want && !tail.trim().is_empty() {
                return Some(tail.trim().to_string());
            }
        }
    }
    None
}

/// Render a template into the messages for one model call.
///
/// `extras` must supply exactly the slots `id.required_extras()` names; the
/// base slots come from the task and instance. Fails loudly on any unfilled
/// slot the body references.
pub fn render(
    set: &TemplateSet,
    id: TemplateId,
    task: &AnnotationTask,
    instance: &Instance,
    extras: &BTreeMap<String, String>,
) -> Result<Vec<ChatMessage>, PromptError> {
    for need in id.required_extras() {
        if !extras.contains_key(*need) {
            return Err(PromptError::MissingExtra { template: id, slot: (*need).to_string() });
        }
    }
    for key in extras.keys() {
        if !id.required_extras().contains(&key.as_str()) {
            return Err(PromptError::UnexpectedExtra { template: id, slot: key.clone() });
        }
    }

    let mut slots: BTreeMap<&str, String> = BTreeMap::new();
    slots.insert("task_description", task.task_description().to_string());
    slots.insert("guideline", task.guideline().to_string());
    slots.insert("labels", render_label_list(task));
    slots.insert("payload", instance.payload.clone());
    slots.insert("domain_tag", task.label_space().domain_tag().to_string());
    for (k, v) in extras {
        slots.insert(k.as_str(), v.clone());
    }

    let fill = |name: &str, template: TemplateId| {
        slots
            .get(name)
            .cloned()
            .ok_or(PromptError::UnfilledSlot { template, slot: name.to_string() })
    };
    let system = expand_inner(set.system(), id, |n| fill(n, id))?;
    let user = expand_inner(set.body(id), id, |n| fill(n, id))?;
    Ok(vec![ChatMessage::system(system), ChatMessage::user(user)])
}

/// Payload after the last `Answer:` marker in a line, if any. The marker is
/// case-insensitive and must start at a word boundary.
fn answer_payload(line: &str) -> Option<&str> {
    let bytes = line.as_bytes();
    let mut found: Option<usize> = None;
    for i in 0..bytes.len().saturating_sub(5) {
        if !bytes[i..i + 6].eq_ignore_ascii_case(b"answer") {
            continue;
        }
        let boundary = line[..i].chars().next_back().map_or(true, |c| !c.is_alphanumeric());
        if !boundary {
            continue;
        }
        let mut j = i + 6;
        while j < bytes.len() && bytes[j].is_ascii_whitespace() {
            j += 1;
        }
        if j < bytes.len() && bytes[j] == b':' {
            found = Some(j + 1);
        }
    }
    found.map(|p| &line[p..])
}

/// Split raw model output into (label, reasoning).
///
/// The label comes from the last line bearing an `Answer:` marker, mapped
/// through [`normalize_label`]. Without a marker, a last non-empty line that
/// is itself a label counts; otherwise the result is invalid and the whole
/// output is kept as reasoning.
pub fn extract_label(raw: &str, space: &LabelSpace) -> (ParsedLabel, String) {
    let lines: Vec<&str> = raw.lines().collect();
    let marked = lines
        .iter()
        .rposition(|line| answer_payload(line).is_some());
    if let Some(idx) = marked {
        let payload = answer_payload(lines[idx]).unwrap();
        let label = normalize_label(payload, space);
        let reasoning = lines[..idx].join("\n").trim().to_string();
        return (label, reasoning);
    }
    if let Some(idx) = lines.iter().rposition(|l| !l.trim().is_empty()) {
        if let ParsedLabel::Valid(label) = normalize_label(lines[idx], space) {
            let reasoning = lines[..idx].join("\n").trim().to_string();
            return (ParsedLabel::Valid(label), reasoning);
        }
    }
    (ParsedLabel::Invalid, raw.trim().to_string())
}

fn annotator_name(i: usize) -> String {
    if i < 26 {
        format!("Annotator {}", (b'A' + i as u8) as char)
    } else {
        format!("Annotator {}", i + 1)
    }
}

/// Render one discussion round for the rework prompt.
///
/// Agents appear in roster order as "Annotator A", "Annotator B", ... so the
/// history never leaks agent ids or model names. Records without a valid
/// label are rendered with their raw output and flagged as such.
pub fn render_discussion_history(records: &[AnnotationRecord]) -> Result<String, PromptError> {
    if records.is_empty() {
        return Err(PromptError::EmptyDiscussion);
    }
    let mut blocks = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let reasoning = rec
            .reasoning
            .as_deref()
            .filter(|r| !r.trim().is_empty())
            .unwrap_or(&rec.raw_output);
        let label = match &rec.parsed_label {
            ParsedLabel::Valid(l) => l.as_str(),
            ParsedLabel::Invalid => "no valid label produced",
        };
        blocks.push(format!(
            "{}:\nReasoning:\n{}\nLabel: {}",
            annotator_name(i),
            reasoning.trim(),
            label
        ));
    }
    Ok(blocks.join("\n\n"))
}
