//! Parsers for the on-disk task and dataset formats.
//!
//! Datasets are JSONL, one instance per line:
//! `{"instance_id": "...", "payload": "...", "gold_label": "..."|null}`.
//! Tasks are a single JSON object with the task text, guideline, label list,
//! and domain tag.

use crate::model::{AnnotationTask, Instance, LabelSpace, ModelError};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("dataset line {line}: {source}")]
    DatasetLine {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("task file: {0}")]
    TaskJson(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Parse a JSONL dataset. Blank lines are skipped; line numbers in errors are
/// 1-based.
pub fn parse_dataset_jsonl(text: &str) -> Result<Vec<Instance>, DataError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let inst: Instance = serde_json::from_str(line)
            .map_err(|source| DataError::DatasetLine { line: i + 1, source })?;
        out.push(inst);
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct TaskFile {
    task_id: String,
    task_description: String,
    guideline: String,
    labels: Vec<String>,
    domain_tag: String,
}

/// Parse and validate a task JSON file.
pub fn parse_task_json(text: &str) -> Result<AnnotationTask, DataError> {
    let file: TaskFile = serde_json::from_str(text)?;
    let space = LabelSpace::new(file.labels, file.domain_tag)?;
    Ok(AnnotationTask::new(file.task_id, file.task_description, file.guideline, space)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_parses_lines_and_reports_bad_ones() {
        let text = r#"{"instance_id":"a","payload":"x","gold_label":"Yes"}

{"instance_id":"b","payload":"y","gold_label":null}
{"instance_id":"c","payload":"z"}"#;
        let rows = parse_dataset_jsonl(text).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].gold_label.as_deref(), Some("Yes"));
        assert_eq!(rows[1].gold_label, None);
        assert_eq!(rows[2].gold_label, None);

        let bad = "{\"instance_id\":\"a\",\"payload\":\"x\"}\nnot json";
        let err = parse_dataset_jsonl(bad).unwrap_err();
        assert!(matches!(err, DataError::DatasetLine { line: 2, .. }));
    }

    #[test]
    fn task_file_round_trips_and_validates() {
        let text = r#"{
            "task_id": "fomc",
            "task_description": "Classify the stance.",
            "guideline": "Dovish: easing. Hawkish: tightening.",
            "labels": ["Dovish", "Hawkish", "Neutral"],
            "domain_tag": "monetary policy"
        }"#;
        let task = parse_task_json(text).unwrap();
        assert_eq!(task.task_id(), "fomc");
        assert_eq!(task.label_space().len(), 3);
        assert_eq!(task.label_space().domain_tag(), "monetary policy");

        let dup = text.replace("\"Neutral\"", "\"dovish\"");
        assert!(matches!(parse_task_json(&dup), Err(DataError::Model(_))));
    }
}
