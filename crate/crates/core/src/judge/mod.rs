//! Predictors that answer a four-way multiple-choice question from a
//! summary alone.
//!
//! Two implementations share the [`Predictor`] trait: a deterministic
//! token-overlap scorer for fully offline runs, and a remote
//! text-completion client that renders the prediction prompt, posts it
//! to an endpoint, and parses the answer letter. Training and
//! evaluation code is generic over the trait, so swapping the desk
//! oracle for a live endpoint is a configuration change.

mod prompt;
mod remote;

pub use prompt::{build_prediction_prompt, parse_choice};
pub use remote::{
    complete_with_retry, EndpointConfig, HttpCompleter, RemotePredictor, TextCompleter,
};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CatalogEntry, MultipleChoiceQuestion, UserLog};
use crate::text::token_set;

#[derive(Debug, Error)]
pub enum JudgeError {
    /// Transport retries were exhausted without a completed request.
    #[error("endpoint unavailable after {attempts} attempts: {reason}")]
    EndpointUnavailable { attempts: u32, reason: String },
}

/// A predictor's answer to one multiple-choice question.
///
/// `chosen` is `None` when the response did not contain a recognizable
/// option letter; such outcomes are kept (they score as incorrect) and
/// never retried.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionOutcome {
    pub chosen: Option<usize>,
    pub raw_response: Option<String>,
    pub scores: Option<[f64; 4]>,
    /// Transport retries spent obtaining the response (always 0 for
    /// local predictors).
    pub retries: u32,
}

impl PredictionOutcome {
    pub fn is_unparseable(&self) -> bool {
        self.chosen.is_none()
    }
}

/// Anything that can answer a four-choice question about a summary.
pub trait Predictor: Sync {
    fn predict(
        &self,
        summary_text: &str,
        mcq: &MultipleChoiceQuestion,
    ) -> Result<PredictionOutcome, JudgeError>;
}

/// Jaccard overlap between two token sets; 0 when both are empty.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Score each choice by Jaccard overlap between the summary's tokens
/// and that choice's token set; pick the argmax, lowest index on ties.
/// Pure: equal inputs give equal outputs.
pub fn overlap_predict(
    summary_text: &str,
    mcq: &MultipleChoiceQuestion,
    choice_tokens: &[BTreeSet<String>; 4],
) -> PredictionOutcome {
    let summary = token_set(summary_text);
    let mut scores = [0.0f64; 4];
    for (slot, tokens) in choice_tokens.iter().enumerate() {
        scores[slot] = jaccard(&summary, tokens);
    }
    let mut best = 0;
    for slot in 1..4 {
        if scores[slot] > scores[best] {
            best = slot;
        }
    }
    let _ = mcq;
    PredictionOutcome {
        chosen: Some(best),
        raw_response: None,
        scores: Some(scores),
        retries: 0,
    }
}

/// Deterministic stand-in for a frozen language-model predictor: each
/// choice is represented by its name tokens plus any attribute tokens
/// learned from a catalog or activity logs, and the choice whose token
/// set best overlaps the summary wins.
#[derive(Debug, Clone, Default)]
pub struct OverlapPredictor {
    attribute_tokens: BTreeMap<String, BTreeSet<String>>,
}

impl OverlapPredictor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_catalog(entries: &[CatalogEntry]) -> Self {
        let mut p = Self::new();
        p.index_catalog(entries);
        p
    }

    pub fn from_logs<'a>(logs: impl IntoIterator<Item = &'a UserLog>) -> Self {
        let mut p = Self::new();
        p.index_logs(logs);
        p
    }

    pub fn index_catalog(&mut self, entries: &[CatalogEntry]) {
        for entry in entries {
            self.attribute_tokens
                .entry(entry.name.clone())
                .or_default()
                .extend(token_set(&entry.genre));
        }
    }

    pub fn index_logs<'a>(&mut self, logs: impl IntoIterator<Item = &'a UserLog>) {
        for log in logs {
            for act in &log.activities {
                let slot = self.attribute_tokens.entry(act.name.clone()).or_default();
                for values in act.attributes.values() {
                    for value in values {
                        slot.extend(token_set(value));
                    }
                }
            }
        }
    }

    /// The token set representing one choice: its own name's tokens
    /// plus indexed attribute tokens, when the item is known.
    pub fn choice_tokens(&self, choice: &str) -> BTreeSet<String> {
        let mut tokens = token_set(choice);
        if let Some(extra) = self.attribute_tokens.get(choice) {
            tokens.extend(extra.iter().cloned());
        }
        tokens
    }
}

impl Predictor for OverlapPredictor {
    fn predict(
        &self,
        summary_text: &str,
        mcq: &MultipleChoiceQuestion,
    ) -> Result<PredictionOutcome, JudgeError> {
        let tokens = [
            self.choice_tokens(&mcq.choices[0]),
            self.choice_tokens(&mcq.choices[1]),
            self.choice_tokens(&mcq.choices[2]),
            self.choice_tokens(&mcq.choices[3]),
        ];
        Ok(overlap_predict(summary_text, mcq, &tokens))
    }
}

/// Answer many questions through one predictor, with up to
/// `concurrency` requests in flight. Output order is input order:
/// result i always answers item i, so fan-out never perturbs
/// downstream reward or metric computations.
pub fn predict_batch<P: Predictor + ?Sized>(
    predictor: &P,
    items: &[(&str, &MultipleChoiceQuestion)],
    concurrency: usize,
) -> Result<Vec<PredictionOutcome>, JudgeError> {
    if concurrency <= 1 || items.len() <= 1 {
        return items
            .iter()
            .map(|(summary, mcq)| predictor.predict(summary, mcq))
            .collect();
    }
    let slots: Vec<std::sync::Mutex<Option<Result<PredictionOutcome, JudgeError>>>> =
        items.iter().map(|_| std::sync::Mutex::new(None)).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..concurrency.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some((summary, mcq)) = items.get(i) else { break };
                let outcome = predictor.predict(summary, mcq);
                *slots[i].lock().unwrap() = Some(outcome);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("every slot filled"))
        .collect()
}
