//! Training and evaluation stack for reward-tuned user-context summarizers.
//!
//! A small autoregressive policy summarizes a window of a user's activity
//! history. A frozen predictor then answers a four-way multiple-choice
//! question about the user's next activity from the summary alone; whether
//! it answers correctly is the main reward signal, plus a capped length
//! bonus. The policy is updated by REINFORCE with a learned baseline and a
//! KL anchor to its initial parameters.
//!
//! Module map:
//! - [`corpus`]: activity-log ingestion, synthetic corpus generation,
//!   training-example windows, multiple-choice construction.
//! - [`textmodel`]: the from-scratch policy (vocabulary, forward pass,
//!   sampling, log-probs, KL, analytic gradients, checkpoints).
//! - [`judge`]: frozen predictors (token-overlap and remote endpoint),
//!   prompt construction, answer parsing.
//! - [`reward`]: prediction + length reward and per-batch scoring.
//! - [`trainer`]: the REINFORCE training loop with value warm-up.
//! - [`evalharness`]: tasks, baselines, ROUGE-Lsum, paired t-tests, and
//!   the pairwise auto-rater protocol.
//!
//! Everything seeded is bit-reproducible: RNG streams derive from a master
//! seed via [`rng::substream`], and all reductions run in index order.

pub mod corpus;
pub mod evalharness;
pub mod judge;
pub mod reward;
pub mod rng;
pub mod text;
pub mod textmodel;
pub mod trainer;
