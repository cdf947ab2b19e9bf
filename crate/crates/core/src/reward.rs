//! Reward computation for summary training.
//!
//! Each sampled summary earns two signals: a binary prediction reward
//! (did the frozen predictor pick the true next activity from four
//! choices, given only the summary?) and a capped length reward that
//! pays a small bonus below a target length and a linear penalty above
//! it. The combined scalar is `r_pred + w * r_len`, with no hidden
//! normalization.

use serde::{Deserialize, Serialize};

use crate::corpus::MultipleChoiceQuestion;
use crate::judge::{predict_batch, JudgeError, PredictionOutcome, Predictor};

/// Reward hyperparameters.
///
/// `length_reward` computes `min(cap_c, beta * (target_len - l))`:
/// `cap_c` bounds the bonus, `beta` scales the slope, `target_len` is
/// the length where the reward crosses zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// Weight of the length term in the combined reward.
    pub w: f64,
    pub cap_c: f64,
    pub beta: f64,
    pub target_len: usize,
}

impl RewardConfig {
    /// Constants calibrated for summaries a few hundred tokens long.
    pub fn full_scale() -> Self {
        Self { w: 1.0, cap_c: 1e-4, beta: 3e-3, target_len: 268 }
    }

    /// Constants for the small synthetic corpus, where summaries are
    /// around a dozen tokens.
    pub fn desk() -> Self {
        Self { w: 1.0, cap_c: 0.01, beta: 0.05, target_len: 12 }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.cap_c > 0.0) {
            return Err(format!("cap_c must be > 0, got {}", self.cap_c));
        }
        if !(self.beta > 0.0) {
            return Err(format!("beta must be > 0, got {}", self.beta));
        }
        if self.target_len < 1 {
            return Err("target_len must be >= 1".to_string());
        }
        Ok(())
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Per-episode reward decomposition. `episode_kl` rides along for
/// logging only; the KL term enters the parameter update separately,
/// never the reward scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_pred: f64,
    pub r_len: f64,
    pub combined: f64,
    pub episode_kl: f64,
    pub summary_len: usize,
}

/// `min(cap_c, beta * (target_len - l))`: nonincreasing in `l`, capped
/// at `cap_c` for short summaries, zero at the target, negative with
/// slope `-beta` beyond it.
pub fn length_reward(l: usize, cfg: &RewardConfig) -> f64 {
    let gap = cfg.target_len as f64 - l as f64;
    cfg.cap_c.min(cfg.beta * gap)
}

/// 1 when the predictor picked the true choice; unparseable outcomes
/// count as incorrect.
pub fn prediction_reward(outcome: &PredictionOutcome, truth_index: usize) -> f64 {
    match outcome.chosen {
        Some(idx) if idx == truth_index => 1.0,
        _ => 0.0,
    }
}

pub fn combine(r_pred: f64, r_len: f64, cfg: &RewardConfig) -> f64 {
    r_pred + cfg.w * r_len
}

/// Score a batch of summaries against their questions. Predictor calls
/// fan out up to `concurrency` in flight, but output order is always
/// input order and each breakdown equals the single-call result.
pub fn batch_rewards<P: Predictor + ?Sized>(
    summaries: &[(String, usize)],
    mcqs: &[MultipleChoiceQuestion],
    predictor: &P,
    cfg: &RewardConfig,
    concurrency: usize,
) -> Result<Vec<RewardBreakdown>, JudgeError> {
    assert_eq!(summaries.len(), mcqs.len(), "one question per summary");
    let items: Vec<(&str, &MultipleChoiceQuestion)> =
        summaries.iter().map(|(text, _)| text.as_str()).zip(mcqs).collect();
    let outcomes = predict_batch(predictor, &items, concurrency)?;
    Ok(summaries
        .iter()
        .zip(mcqs)
        .zip(outcomes)
        .map(|(((_, len), mcq), outcome)| {
            let r_pred = prediction_reward(&outcome, mcq.truth_index);
            let r_len = length_reward(*len, cfg);
            RewardBreakdown {
                r_pred,
                r_len,
                combined: combine(r_pred, r_len, cfg),
                episode_kl: 0.0,
                summary_len: *len,
            }
        })
        .collect())
}
