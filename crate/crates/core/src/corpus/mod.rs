//! Activity-log corpus handling: the on-disk JSONL schema, a synthetic
//! corpus generator, context/target example windows, multiple-choice
//! construction, and per-user task labels.
//!
//! Wire format, one user per line:
//! `{"user_id": string, "activities": [{"name": string, "rating":
//! number|null, "order_index": int, "attributes": {string: [string]}}],
//! "demographics": {string: string}}`
//!
//! Required fields are `user_id`, `activities`, and each activity's
//! `name`; a line violating those is rejected with its line number.
//! Malformed optional fields are dropped rather than rejected. Activities
//! are re-sorted by `order_index` on ingest.

mod examples;
mod synth;

pub use examples::{
    build_examples, build_mcq, build_mcq_with, catalog_from_logs, render_context, render_records,
    sample_negatives, sample_negatives_with, MultipleChoiceQuestion, TemplateId, TrainingExample,
    PLACES_STATE, PRODUCTS_DOMAIN,
};
pub use synth::{synth_generate, synth_generate_with_latents, SynthConfig};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// One interaction: an item name, an optional 1..5 rating, a position in
/// the user's history, and free-form attributes such as genre or city.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivityRecord {
    pub name: String,
    pub rating: Option<f64>,
    pub order_index: i64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, Vec<String>>,
}

/// A user's full history plus optional demographic fields.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserLog {
    pub user_id: String,
    pub activities: Vec<ActivityRecord>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub demographics: BTreeMap<String, String>,
}

/// Catalog row: `{"name": string, "genre": string}` in JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub genre: String,
}

/// Which side of the train/test divide an example belongs to. Test
/// examples always target the final record so the two splits can never
/// share a target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("duplicate user_id {0:?}")]
    DuplicateUser(String),
    #[error("no {0} attribute present for requested task")]
    MissingAttribute(&'static str),
    #[error("multiple-choice options must be distinct from each other and the target")]
    DuplicateChoice,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

fn malformed(line: usize, reason: impl Into<String>) -> CorpusError {
    CorpusError::MalformedLine { line, reason: reason.into() }
}

/// Parses JSONL text into user logs. Blank lines are skipped. Line
/// numbers in errors are 1-based.
pub fn parse_jsonl(text: &str) -> Result<Vec<UserLog>, CorpusError> {
    let mut logs: Vec<UserLog> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(raw)
            .map_err(|e| malformed(line_no, format!("invalid json: {e}")))?;
        let log = parse_user(&value, line_no)?;
        if !seen.insert(log.user_id.clone()) {
            return Err(CorpusError::DuplicateUser(log.user_id));
        }
        logs.push(log);
    }
    Ok(logs)
}

/// Reads and validates a corpus file. See [`parse_jsonl`].
pub fn ingest_jsonl(path: &Path) -> Result<Vec<UserLog>, CorpusError> {
    parse_jsonl(&std::fs::read_to_string(path)?)
}

fn parse_user(value: &serde_json::Value, line: usize) -> Result<UserLog, CorpusError> {
    let obj = value
        .as_object()
        .ok_or_else(|| malformed(line, "expected a json object"))?;
    let user_id = obj
        .get("user_id")
        .and_then(|v| v.as_str())
        .ok_or_else(|| malformed(line, "missing or non-string user_id"))?
        .to_string();
    let raw_acts = obj
        .get("activities")
        .and_then(|v| v.as_array())
        .ok_or_else(|| malformed(line, "missing or non-array activities"))?;

    let mut activities = Vec::with_capacity(raw_acts.len());
    for (pos, act) in raw_acts.iter().enumerate() {
        let act_obj = act
            .as_object()
            .ok_or_else(|| malformed(line, format!("activity {pos} is not an object")))?;
        let name = act_obj
            .get("name")
            .and_then(|v| v.as_str())
            .ok_or_else(|| malformed(line, format!("activity {pos} missing name")))?
            .to_string();
        // Optional fields degrade silently: a bad rating becomes None, a
        // bad order_index falls back to array position.
        let rating = act_obj.get("rating").and_then(|v| v.as_f64());
        let order_index = act_obj
            .get("order_index")
            .and_then(|v| v.as_i64())
            .unwrap_or(pos as i64);
        let mut attributes = BTreeMap::new();
        if let Some(attrs) = act_obj.get("attributes").and_then(|v| v.as_object()) {
            for (key, val) in attrs {
                if let Some(list) = val.as_array() {
                    let vals: Vec<String> = list
                        .iter()
                        .filter_map(|x| x.as_str().map(str::to_string))
                        .collect();
                    if !vals.is_empty() {
                        attributes.insert(key.clone(), vals);
                    }
                }
            }
        }
        activities.push(ActivityRecord { name, rating, order_index, attributes });
    }
    activities.sort_by_key(|a| a.order_index);

    let mut demographics = BTreeMap::new();
    if let Some(demo) = obj.get("demographics").and_then(|v| v.as_object()) {
        for (key, val) in demo {
            if let Some(s) = val.as_str() {
                demographics.insert(key.clone(), s.to_string());
            }
        }
    }
    Ok(UserLog { user_id, activities, demographics })
}

/// Writes logs as JSONL, one user per line, in the given order.
pub fn write_jsonl(path: &Path, logs: &[UserLog]) -> Result<(), CorpusError> {
    let mut out = String::new();
    for log in logs {
        out.push_str(&serde_json::to_string(log).expect("user log serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a catalog JSONL file of `{"name", "genre"}` rows.
pub fn read_catalog(path: &Path) -> Result<Vec<CatalogEntry>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let entry: CatalogEntry = serde_json::from_str(raw)
            .map_err(|e| malformed(idx + 1, format!("invalid catalog row: {e}")))?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Writes a catalog as JSONL in the given order.
pub fn write_catalog(path: &Path, entries: &[CatalogEntry]) -> Result<(), CorpusError> {
    let mut out = String::new();
    for entry in entries {
        out.push_str(&serde_json::to_string(entry).expect("catalog row serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Per-user labels derived from a log for the evaluation tasks. Fields
/// are `None` when the backing attribute never occurs in the history.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskLabels {
    /// Modal `genre` attribute value; ties break lexicographically.
    pub favorite_genre: Option<String>,
    /// Modal `category` attribute value; ties break lexicographically.
    pub favorite_category: Option<String>,
    /// The user's ten most frequent `category` values, most frequent
    /// first, used as the candidate vocabulary for category ranking.
    pub top_categories: Vec<String>,
    /// Modal `city` attribute value; ties break lexicographically.
    pub common_city: Option<String>,
    /// Demographic fields copied from the log.
    pub demographics: BTreeMap<String, String>,
}

impl TaskLabels {
    pub fn require_favorite_genre(&self) -> Result<&str, CorpusError> {
        self.favorite_genre
            .as_deref()
            .ok_or(CorpusError::MissingAttribute("genre"))
    }

    pub fn require_common_city(&self) -> Result<&str, CorpusError> {
        self.common_city
            .as_deref()
            .ok_or(CorpusError::MissingAttribute("city"))
    }
}

/// Most frequent value of `attr` across all activities; ties go to the
/// lexicographically smallest value. `None` if the attribute never occurs.
pub fn modal_attribute(log: &UserLog, attr: &str) -> Option<String> {
    let counts = attribute_counts(log, attr);
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        .map(|(value, _)| value)
}

/// The `k` most frequent values of `attr`, most frequent first; ties
/// break lexicographically.
pub fn top_attributes(log: &UserLog, attr: &str, k: usize) -> Vec<String> {
    let counts = attribute_counts(log, attr);
    let mut pairs: Vec<(String, usize)> = counts.into_iter().collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    pairs.truncate(k);
    pairs.into_iter().map(|(value, _)| value).collect()
}

fn attribute_counts(log: &UserLog, attr: &str) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for act in &log.activities {
        if let Some(values) = act.attributes.get(attr) {
            for value in values {
                *counts.entry(value.clone()).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Derives every task label in one pass over the log.
pub fn derive_task_labels(log: &UserLog) -> TaskLabels {
    TaskLabels {
        favorite_genre: modal_attribute(log, "genre"),
        favorite_category: modal_attribute(log, "category"),
        top_categories: top_attributes(log, "category", 10),
        common_city: modal_attribute(log, "city"),
        demographics: log.demographics.clone(),
    }
}
