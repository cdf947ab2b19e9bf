//! The optimization loop.
//!
//! Each step samples one summary per batch episode, scores it with the
//! frozen predictor plus the length reward, reduces variance with a
//! learned scalar baseline, and ascends
//!
//! ```text
//! theta += lr * [ (1 - alpha) * mean_i(advantage_i * grad log pi(s_i | u_i))
//!                 - alpha     * mean_i(grad KL_i(pi, pi_init)) ]
//! ```
//!
//! where `advantage_i = combined_reward_i - value(u_i)`. The first
//! `warmup_steps` steps update only the value baseline, leaving the
//! policy bit-identical to initialization. All reductions run in batch
//! index order so replays with equal seeds are bit-exact.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    build_examples, build_mcq_with, catalog_from_logs, sample_negatives_with, CorpusError,
    MultipleChoiceQuestion, Split, TemplateId, TrainingExample, UserLog,
};
use crate::judge::{JudgeError, Predictor};
use crate::reward::{batch_rewards, RewardBreakdown, RewardConfig};
use crate::rng::{stream, substream};
use crate::textmodel::{
    episode_kl, grad_episode_kl, grad_log_prob, greedy_summary, sample_summary, save_checkpoint,
    ModelError, PolicyParameters, PolicyState, Summary, ValueGradient, Vocabulary,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid trainer configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error("non-finite parameter update at step {step}")]
    NonFiniteUpdate { step: usize },
    #[error("failed writing training artifacts: {0}")]
    Io(#[from] std::io::Error),
}

/// Hyperparameters for [`run_training`]. Defaults are the desk-scale
/// preset; [`TrainerConfig::full_scale`] switches the optimization
/// constants to the values used for full-size summarizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Separate step size for the value baseline: count features have a
    /// squared norm in the hundreds, so the policy learning rate would
    /// diverge the least-squares fit.
    pub value_learning_rate: f64,
    pub steps: usize,
    /// Steps 1..=warmup_steps update only the value baseline.
    pub warmup_steps: usize,
    /// Weight of the KL anchor to the frozen initial policy.
    pub alpha: f64,
    pub policy_temperature: f64,
    pub seed: u64,
    pub reward: RewardConfig,
    /// Evaluate on the test split (and checkpoint) every this many steps.
    pub eval_every: usize,
    /// Activities per rendered context window.
    pub context_len: usize,
    pub vocab_size: usize,
    pub hidden_width: usize,
    pub max_summary_len: usize,
    pub template: TemplateId,
    /// Predictor fan-out cap; 1 keeps reward calls in-thread.
    pub concurrency: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 0.05,
            value_learning_rate: 5e-3,
            steps: 3000,
            warmup_steps: 300,
            alpha: 0.01,
            policy_temperature: 1.1,
            seed: 17,
            reward: RewardConfig::desk(),
            eval_every: 250,
            context_len: 16,
            vocab_size: 256,
            hidden_width: 32,
            max_summary_len: 24,
            template: TemplateId::Movies,
            concurrency: 1,
        }
    }
}

impl TrainerConfig {
    /// Optimization constants for full-size summarizers: bigger batches,
    /// far smaller steps, and the large-corpus reward calibration.
    pub fn full_scale() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 1e-6,
            steps: 15000,
            reward: RewardConfig::full_scale(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |msg: String| Err(TrainError::InvalidConfig(msg));
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(self.alpha >= 0.0 && self.alpha <= 1.0) {
            return fail(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.warmup_steps > self.steps {
            return fail(format!(
                "warmup_steps ({}) must not exceed steps ({})",
                self.warmup_steps, self.steps
            ));
        }
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.learning_rate) || !positive(self.value_learning_rate) {
            return fail("learning rates must be positive and finite".into());
        }
        if !positive(self.policy_temperature) {
            return fail("policy_temperature must be positive and finite".into());
        }
        if self.eval_every == 0 {
            return fail("eval_every must be positive".into());
        }
        if self.context_len == 0 || self.max_summary_len == 0 {
            return fail("context_len and max_summary_len must be positive".into());
        }
        self.reward.validate().map_err(TrainError::InvalidConfig)
    }
}

/// One metrics row; all means are over the step's batch. `value_mse` is
/// measured before the step's value update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: usize,
    pub mean_reward: f64,
    pub mean_pred_reward: f64,
    pub mean_len_reward: f64,
    pub mean_summary_len: f64,
    pub mean_kl: f64,
    pub value_mse: f64,
    pub eval_accuracy: Option<f64>,
}

pub const METRICS_HEADER: &str =
    "step,mean_reward,mean_pred_reward,mean_len_reward,mean_summary_len,mean_kl,value_mse,eval_accuracy";

impl TrainLogRow {
    /// CSV row matching [`METRICS_HEADER`]; `eval_accuracy` renders as
    /// an empty cell on non-evaluation steps.
    pub fn csv_row(&self) -> String {
        let eval = self.eval_accuracy.map(|a| a.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step,
            self.mean_reward,
            self.mean_pred_reward,
            self.mean_len_reward,
            self.mean_summary_len,
            self.mean_kl,
            self.value_mse,
            eval
        )
    }
}

/// One prepared training episode: the example, its fixed four-choice
/// question, and the precomputed context feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub example: TrainingExample,
    pub mcq: MultipleChoiceQuestion,
    pub features: Vec<f64>,
}

/// Prepared corpus: shared vocabulary plus train/test episodes.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub vocab: Vocabulary,
    pub train: Vec<Episode>,
    pub test: Vec<Episode>,
    /// Distinct item names, the negative-sampling pool.
    pub catalog: Vec<String>,
}

/// Builds episodes from raw logs: renders contexts, fixes one question
/// per episode (negatives and truth slot drawn from per-episode
/// streams), and builds the vocabulary from every rendered context plus
/// one line per activity carrying its name and attribute values, so
/// attribute words that never appear inside rendered contexts are still
/// emittable and predictable.
pub fn prepare_training_data(
    logs: &[UserLog],
    cfg: &TrainerConfig,
) -> Result<TrainingData, TrainError> {
    cfg.validate()?;
    let (train_examples, _) =
        build_examples(logs, cfg.context_len, Split::Train, cfg.seed, cfg.template)?;
    let (test_examples, _) =
        build_examples(logs, cfg.context_len, Split::Test, cfg.seed, cfg.template)?;
    let catalog = catalog_from_logs(logs);

    let mut attribute_lines = Vec::new();
    for log in logs {
        for act in &log.activities {
            let mut line = act.name.clone();
            for values in act.attributes.values() {
                for value in values {
                    line.push(' ');
                    line.push_str(value);
                }
            }
            attribute_lines.push(line);
        }
    }
    let texts = train_examples
        .iter()
        .chain(&test_examples)
        .map(|e| e.rendered_context.as_str())
        .chain(attribute_lines.iter().map(String::as_str));
    let vocab = Vocabulary::build(texts, cfg.vocab_size)?;

    let episodes = |examples: Vec<TrainingExample>, split_tag: u64| {
        examples
            .into_iter()
            .enumerate()
            .map(|(i, example)| {
                let negatives = sample_negatives_with(
                    &catalog,
                    &example.target.name,
                    3,
                    &mut substream(cfg.seed, &[stream::NEGATIVES, split_tag, i as u64]),
                )?;
                let mcq = build_mcq_with(
                    &example.target.name,
                    &negatives,
                    &mut substream(cfg.seed, &[stream::MCQ_SLOT, split_tag, i as u64]),
                )?;
                let features = vocab.count_features(&example.rendered_context);
                Ok(Episode { example, mcq, features })
            })
            .collect::<Result<Vec<Episode>, CorpusError>>()
    };
    let train = episodes(train_examples, 0)?;
    let test = episodes(test_examples, 1)?;
    Ok(TrainingData { vocab, train, test, catalog })
}

/// Greedy-decode a summary for every episode and report the fraction of
/// questions the predictor then answers correctly.
pub fn evaluate_accuracy<P: Predictor + ?Sized>(
    params: &PolicyParameters,
    vocab: &Vocabulary,
    episodes: &[Episode],
    predictor: &P,
    max_len: usize,
) -> Result<f64, TrainError> {
    if episodes.is_empty() {
        return Err(TrainError::InvalidConfig("cannot evaluate on zero episodes".into()));
    }
    let mut correct = 0usize;
    for ep in episodes {
        let summary = greedy_summary(params, vocab, &ep.features, max_len)?;
        let outcome = predictor.predict(&summary.text, &ep.mcq)?;
        if outcome.chosen == Some(ep.mcq.truth_index) {
            correct += 1;
        }
    }
    Ok(correct as f64 / episodes.len() as f64)
}

fn rollout_batch(
    state: &PolicyState,
    vocab: &Vocabulary,
    batch: &[&Episode],
    cfg: &TrainerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Summary>, TrainError> {
    batch
        .iter()
        .map(|ep| {
            Ok(sample_summary(
                &state.policy,
                vocab,
                &ep.features,
                cfg.policy_temperature,
                cfg.max_summary_len,
                rng,
            )?)
        })
        .collect()
}

fn score_batch<P: Predictor + ?Sized>(
    state: &PolicyState,
    batch: &[&Episode],
    summaries: &[Summary],
    predictor: &P,
    cfg: &TrainerConfig,
) -> Result<Vec<RewardBreakdown>, TrainError> {
    let pairs: Vec<(String, usize)> =
        summaries.iter().map(|s| (s.text.clone(), s.token_length)).collect();
    let mcqs: Vec<MultipleChoiceQuestion> = batch.iter().map(|ep| ep.mcq.clone()).collect();
    let mut breakdowns =
        batch_rewards(&pairs, &mcqs, predictor, &cfg.reward, cfg.concurrency)?;
    for (b, (ep, s)) in breakdowns.iter_mut().zip(batch.iter().zip(summaries)) {
        b.episode_kl =
            episode_kl(&state.policy, &state.reference, &ep.features, &s.token_ids)?;
    }
    Ok(breakdowns)
}

fn log_row(
    step: usize,
    breakdowns: &[RewardBreakdown],
    value_mse: f64,
    eval_accuracy: Option<f64>,
) -> TrainLogRow {
    let n = breakdowns.len() as f64;
    TrainLogRow {
        step,
        mean_reward: breakdowns.iter().map(|b| b.combined).sum::<f64>() / n,
        mean_pred_reward: breakdowns.iter().map(|b| b.r_pred).sum::<f64>() / n,
        mean_len_reward: breakdowns.iter().map(|b| b.r_len).sum::<f64>() / n,
        mean_summary_len: breakdowns.iter().map(|b| b.summary_len as f64).sum::<f64>() / n,
        mean_kl: breakdowns.iter().map(|b| b.episode_kl).sum::<f64>() / n,
        value_mse,
        eval_accuracy,
    }
}

/// One optimization step over `batch` (1-based `step`). Samples rollouts
/// from `rollout_rng`, always fits the value baseline, and updates the
/// policy only after the warm-up window. Reductions run in batch index
/// order; bit-exact under equal seeds.
pub fn train_step<P: Predictor + ?Sized>(
    state: &mut PolicyState,
    vocab: &Vocabulary,
    batch: &[&Episode],
    predictor: &P,
    cfg: &TrainerConfig,
    step: usize,
    rollout_rng: &mut ChaCha8Rng,
) -> Result<TrainLogRow, TrainError> {
    assert!(!batch.is_empty(), "train_step requires a nonempty batch");
    let n = batch.len() as f64;

    let summaries = rollout_batch(state, vocab, batch, cfg, rollout_rng)?;
    let breakdowns = score_batch(state, batch, &summaries, predictor, cfg)?;

    // Advantages and the value loss use the pre-update baseline.
    let values: Vec<f64> = batch.iter().map(|ep| state.value.predict(&ep.features)).collect();
    let advantages: Vec<f64> =
        breakdowns.iter().zip(&values).map(|(b, v)| b.combined - v).collect();
    let value_mse = breakdowns
        .iter()
        .zip(&values)
        .map(|(b, v)| (b.combined - v).powi(2))
        .sum::<f64>()
        / n;

    let mut value_grad = ValueGradient { weights: vec![0.0; vocab.size()], bias: 0.0 };
    for (ep, (value, b)) in batch.iter().zip(values.iter().zip(&breakdowns)) {
        let g = state.value.grad(&ep.features, value - b.combined);
        for (acc, gi) in value_grad.weights.iter_mut().zip(&g.weights) {
            *acc += gi;
        }
        value_grad.bias += g.bias;
    }
    state.value.step(&value_grad, cfg.value_learning_rate / n);

    if step > cfg.warmup_steps {
        let mut update = PolicyParameters::zeros(state.policy.v, state.policy.h);
        for (i, (ep, summary)) in batch.iter().zip(&summaries).enumerate() {
            if cfg.alpha < 1.0 && advantages[i] != 0.0 {
                let g = grad_log_prob(
                    &state.policy,
                    &ep.features,
                    &summary.token_ids,
                    advantages[i],
                )?;
                update.add_scaled(&g, (1.0 - cfg.alpha) / n);
            }
            if cfg.alpha > 0.0 {
                let g = grad_episode_kl(
                    &state.policy,
                    &state.reference,
                    &ep.features,
                    &summary.token_ids,
                )?;
                update.add_scaled(&g, -cfg.alpha / n);
            }
        }
        if !update.is_finite() {
            return Err(TrainError::NonFiniteUpdate { step });
        }
        state.policy.add_scaled(&update, cfg.learning_rate);
        if !state.policy.is_finite() {
            return Err(TrainError::NonFiniteUpdate { step });
        }
    }

    Ok(log_row(step, &breakdowns, value_mse, None))
}

/// A finished training run: the final state and every metrics row
/// (step 0 is the pre-training probe).
#[derive(Debug)]
pub struct RunArtifacts {
    pub state: PolicyState,
    pub rows: Vec<TrainLogRow>,
}

/// Full training run. Row 0 measures the initial policy on a probe
/// batch without touching any parameters (its KL term is exactly zero
/// by construction); rows 1..=steps are optimization steps. Every
/// `eval_every` steps (and at step 0) the test split is evaluated
/// greedily, and a checkpoint is written when `out_dir` is given.
/// Metrics land in `out_dir/metrics.csv`. Equal configs and seeds
/// produce byte-identical artifacts.
pub fn run_training<P: Predictor + ?Sized>(
    data: &TrainingData,
    predictor: &P,
    cfg: &TrainerConfig,
    out_dir: Option<&Path>,
) -> Result<RunArtifacts, TrainError> {
    cfg.validate()?;
    if data.train.len() < cfg.batch_size {
        return Err(TrainError::InvalidConfig(format!(
            "corpus yields {} train episodes, need at least batch_size = {}",
            data.train.len(),
            cfg.batch_size
        )));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut metrics = match out_dir {
        Some(dir) => {
            let mut w = BufWriter::new(File::create(dir.join("metrics.csv"))?);
            writeln!(w, "{METRICS_HEADER}")?;
            Some(w)
        }
        None => None,
    };

    let init = PolicyParameters::init_random(
        data.vocab.size(),
        cfg.hidden_width,
        &mut substream(cfg.seed, &[stream::PARAM_INIT]),
    );
    let mut state = PolicyState::new(init);
    let mut rows = Vec::with_capacity(cfg.steps + 1);

    let eval = |state: &PolicyState| -> Result<Option<f64>, TrainError> {
        if data.test.is_empty() {
            return Ok(None);
        }
        evaluate_accuracy(
            &state.policy,
            &data.vocab,
            &data.test,
            predictor,
            cfg.max_summary_len,
        )
        .map(Some)
    };

    let checkpoint = |state: &PolicyState, step: usize| -> Result<(), TrainError> {
        if let Some(dir) = out_dir {
            let path = dir.join(format!("checkpoint_{step:06}.ckpt"));
            save_checkpoint(&path, state, data.vocab.hash())?;
        }
        Ok(())
    };

    // Step-0 probe: measure, never update.
    {
        let mut probe_rng = substream(cfg.seed, &[stream::PROBE]);
        let mut batch_rng = substream(cfg.seed, &[stream::BATCH, 0]);
        let batch: Vec<&Episode> = (0..cfg.batch_size)
            .map(|_| &data.train[batch_rng.gen_range(0..data.train.len())])
            .collect();
        let summaries = rollout_batch(&state, &data.vocab, &batch, cfg, &mut probe_rng)?;
        let breakdowns = score_batch(&state, &batch, &summaries, predictor, cfg)?;
        let value_mse = batch
            .iter()
            .zip(&breakdowns)
            .map(|(ep, b)| (b.combined - state.value.predict(&ep.features)).powi(2))
            .sum::<f64>()
            / batch.len() as f64;
        let row = log_row(0, &breakdowns, value_mse, eval(&state)?);
        if let Some(w) = metrics.as_mut() {
            writeln!(w, "{}", row.csv_row())?;
        }
        rows.push(row);
        checkpoint(&state, 0)?;
    }

    for step in 1..=cfg.steps {
        let mut batch_rng = substream(cfg.seed, &[stream::BATCH, step as u64]);
        let batch: Vec<&Episode> = (0..cfg.batch_size)
            .map(|_| &data.train[batch_rng.gen_range(0..data.train.len())])
            .collect();
        let mut rollout_rng = substream(cfg.seed, &[stream::ROLLOUT, step as u64]);
        let mut row = train_step(
            &mut state,
            &data.vocab,
            &batch,
            predictor,
            cfg,
            step,
            &mut rollout_rng,
        )?;
        if step % cfg.eval_every == 0 || step == cfg.steps {
            row.eval_accuracy = eval(&state)?;
            checkpoint(&state, step)?;
        }
        if let Some(w) = metrics.as_mut() {
            writeln!(w, "{}", row.csv_row())?;
        }
        rows.push(row);
    }
    if let Some(mut w) = metrics {
        w.flush()?;
    }
    Ok(RunArtifacts { state, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_generate, SynthConfig};
    use crate::judge::{OverlapPredictor, PredictionOutcome};
    use crate::textmodel::sequence_log_prob;

    fn tiny_synth(seed: u64) -> Vec<UserLog> {
        let (logs, _) = synth_generate(&SynthConfig {
            num_users: 24,
            num_genres: 4,
            catalog_size: 16,
            activities_per_user: 12,
            dirichlet_alpha: 0.05,
            seed,
        })
        .unwrap();
        logs
    }

    fn tiny_cfg() -> TrainerConfig {
        TrainerConfig {
            batch_size: 8,
            steps: 12,
            warmup_steps: 4,
            eval_every: 6,
            context_len: 8,
            vocab_size: 128,
            hidden_width: 8,
            max_summary_len: 10,
            ..TrainerConfig::default()
        }
    }

    struct TruthOracle;
    impl Predictor for TruthOracle {
        fn predict(
            &self,
            _: &str,
            mcq: &MultipleChoiceQuestion,
        ) -> Result<PredictionOutcome, JudgeError> {
            Ok(PredictionOutcome {
                chosen: Some(mcq.truth_index),
                raw_response: None,
                scores: None,
                retries: 0,
            })
        }
    }

    #[test]
    fn prepared_data_covers_names_attributes_and_features() {
        let logs = tiny_synth(5);
        let cfg = tiny_cfg();
        let data = prepare_training_data(&logs, &cfg).unwrap();
        assert_eq!(data.train.len(), 24);
        assert_eq!(data.test.len(), 24);
        assert!(!data.catalog.is_empty());
        // Item names appear in rendered contexts; attribute words only
        // in the extra per-activity lines. Both must be in-vocabulary.
        let name = &logs[0].activities[0].name;
        let genre = &logs[0].activities[0].attributes["genre"][0];
        assert_ne!(data.vocab.id_of(name), crate::textmodel::UNK, "{name}");
        assert_ne!(data.vocab.id_of(genre), crate::textmodel::UNK, "{genre}");
        for ep in data.train.iter().chain(&data.test) {
            assert_eq!(ep.features.len(), data.vocab.size());
            assert_eq!(ep.mcq.truth(), ep.example.target.name);
        }
    }

    #[test]
    fn warmup_only_run_leaves_policy_bit_identical() {
        let logs = tiny_synth(6);
        let cfg = TrainerConfig { steps: 6, warmup_steps: 6, ..tiny_cfg() };
        let data = prepare_training_data(&logs, &cfg).unwrap();
        let predictor = OverlapPredictor::from_logs(&logs);
        let run = run_training(&data, &predictor, &cfg, None).unwrap();
        // The frozen reference is the initialization; bit-for-bit equal.
        for (a, b) in run.state.policy.blocks().into_iter().zip(run.state.reference.blocks()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        // The value baseline did move.
        assert!(run.state.value.bias != 0.0 || run.state.value.weights.iter().any(|&w| w != 0.0));
    }

    #[test]
    fn probe_row_measures_without_updating() {
        let logs = tiny_synth(7);
        let cfg = tiny_cfg();
        let data = prepare_training_data(&logs, &cfg).unwrap();
        let predictor = OverlapPredictor::from_logs(&logs);
        let run = run_training(&data, &predictor, &cfg, None).unwrap();
        assert_eq!(run.rows.len(), cfg.steps + 1);
        let probe = &run.rows[0];
        assert_eq!(probe.step, 0);
        assert_eq!(probe.mean_kl, 0.0, "policy equals reference before any update");
        assert!(probe.eval_accuracy.is_some());
        for row in &run.rows {
            assert!(row.mean_kl >= -1e-9);
        }
    }

    #[test]
    fn alpha_zero_step_equals_vanilla_reinforce_with_baseline() {
        let logs = tiny_synth(8);
        let cfg = TrainerConfig { alpha: 0.0, warmup_steps: 0, ..tiny_cfg() };
        let data = prepare_training_data(&logs, &cfg).unwrap();
        let predictor = OverlapPredictor::from_logs(&logs);
        let init = PolicyParameters::init_random(
            data.vocab.size(),
            cfg.hidden_width,
            &mut substream(cfg.seed, &[stream::PARAM_INIT]),
        );
        let mut fast = PolicyState::new(init);
        let mut manual = fast.clone();
        let batch: Vec<&Episode> = data.train.iter().take(cfg.batch_size).collect();

        train_step(
            &mut fast,
            &data.vocab,
            &batch,
            &predictor,
            &cfg,
            1,
            &mut substream(cfg.seed, &[stream::ROLLOUT, 1]),
        )
        .unwrap();

        // The textbook estimator, written out long-hand.
        let mut rng = substream(cfg.seed, &[stream::ROLLOUT, 1]);
        let summaries: Vec<Summary> = batch
            .iter()
            .map(|ep| {
                sample_summary(
                    &manual.policy,
                    &data.vocab,
                    &ep.features,
                    cfg.policy_temperature,
                    cfg.max_summary_len,
                    &mut rng,
                )
                .unwrap()
            })
            .collect();
        let pairs: Vec<(String, usize)> =
            summaries.iter().map(|s| (s.text.clone(), s.token_length)).collect();
        let mcqs: Vec<MultipleChoiceQuestion> =
            batch.iter().map(|ep| ep.mcq.clone()).collect();
        let rewards =
            batch_rewards(&pairs, &mcqs, &predictor, &cfg.reward, 1).unwrap();
        let n = batch.len() as f64;
        let mut update = PolicyParameters::zeros(manual.policy.v, manual.policy.h);
        let mut value_grad =
            ValueGradient { weights: vec![0.0; data.vocab.size()], bias: 0.0 };
        for ((ep, summary), b) in batch.iter().zip(&summaries).zip(&rewards) {
            let value = manual.value.predict(&ep.features);
            let advantage = b.combined - value;
            let g = grad_log_prob(
                &manual.policy,
                &ep.features,
                &summary.token_ids,
                advantage,
            )
            .unwrap();
            update.add_scaled(&g, (1.0 - cfg.alpha) / n);
            let vg = manual.value.grad(&ep.features, value - b.combined);
            for (acc, gi) in value_grad.weights.iter_mut().zip(&vg.weights) {
                *acc += gi;
            }
            value_grad.bias += vg.bias;
        }
        manual.policy.add_scaled(&update, cfg.learning_rate);
        manual.value.step(&value_grad, cfg.value_learning_rate / n);

        for (a, b) in fast.policy.blocks().into_iter().zip(manual.policy.blocks()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
        }
        for (x, y) in fast.value.weights.iter().zip(&manual.value.weights) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((fast.value.bias - manual.value.bias).abs() < 1e-12);
    }

    #[test]
    fn zero_advantages_with_alpha_zero_apply_no_update() {
        let logs = tiny_synth(9);
        let cfg = TrainerConfig {
            alpha: 0.0,
            warmup_steps: 0,
            reward: RewardConfig { w: 0.0, ..RewardConfig::desk() },
            ..tiny_cfg()
        };
        let data = prepare_training_data(&logs, &cfg).unwrap();
        let init = PolicyParameters::init_random(
            data.vocab.size(),
            cfg.hidden_width,
            &mut substream(cfg.seed, &[stream::PARAM_INIT]),
        );
        let mut state = PolicyState::new(init);
        // Oracle reward is exactly 1 and the baseline exactly matches it,
        // so every advantage and every value residual is exactly zero.
        state.value.bias = 1.0;
        let before = state.clone();
        let batch: Vec<&Episode> = data.train.iter().take(cfg.batch_size).collect();
        train_step(
            &mut state,
            &data.vocab,
            &batch,
            &TruthOracle,
            &cfg,
            1,
            &mut substream(cfg.seed, &[stream::ROLLOUT, 1]),
        )
        .unwrap();
        for (a, b) in state.policy.blocks().into_iter().zip(before.policy.blocks()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(state.value, before.value);
    }

    #[test]
    fn pure_kl_descent_decreases_kl_every_iteration() {
        let v = 12;
        let h = 4;
        let reference = PolicyParameters::init_random(v, h, &mut substream(31, &[95]));
        let mut params = reference.clone();
        let noise = PolicyParameters::init_random(v, h, &mut substream(32, &[95]));
        params.add_scaled(&noise, 3.0);

        let features: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                let mut rng = substream(33 + i, &[96]);
                (0..v).map(|_| rng.gen_range(0..3) as f64).collect()
            })
            .collect();
        let trajectories: Vec<Vec<usize>> =
            vec![vec![3, 5, 7, 1], vec![4, 4, 9], vec![10, 3, 6, 8, 1]];
        let mean_kl = |p: &PolicyParameters| {
            features
                .iter()
                .zip(&trajectories)
                .map(|(f, t)| episode_kl(p, &reference, f, t).unwrap())
                .sum::<f64>()
                / 3.0
        };

        let mut last = mean_kl(&params);
        assert!(last > 0.01, "perturbation must move the policy, KL {last}");
        for _ in 0..200 {
            let mut grad = PolicyParameters::zeros(v, h);
            for (f, t) in features.iter().zip(&trajectories) {
                let g = grad_episode_kl(&params, &reference, f, t).unwrap();
                grad.add_scaled(&g, 1.0 / 3.0);
            }
            params.add_scaled(&grad, -0.01);
            let now = mean_kl(&params);
            assert!(now < last, "KL must decrease every iteration: {now} vs {last}");
            last = now;
        }
    }

    #[test]
    fn alpha_one_training_pulls_logged_kl_down() {
        let logs = tiny_synth(10);
        let cfg = TrainerConfig {
            alpha: 1.0,
            warmup_steps: 0,
            steps: 200,
            learning_rate: 0.1,
            ..tiny_cfg()
        };
        let data = prepare_training_data(&logs, &cfg).unwrap();
        let predictor = OverlapPredictor::from_logs(&logs);
        let init = PolicyParameters::init_random(
            data.vocab.size(),
            cfg.hidden_width,
            &mut substream(cfg.seed, &[stream::PARAM_INIT]),
        );
        let mut state = PolicyState::new(init);
        let noise = PolicyParameters::init_random(
            data.vocab.size(),
            cfg.hidden_width,
            &mut substream(99, &[stream::PARAM_INIT]),
        );
        state.policy.add_scaled(&noise, 0.4);

        let batch: Vec<&Episode> = data.train.iter().take(cfg.batch_size).collect();
        let mut kls = Vec::new();
        for step in 1..=cfg.steps {
            let row = train_step(
                &mut state,
                &data.vocab,
                &batch,
                &predictor,
                &cfg,
                step,
                &mut substream(cfg.seed, &[stream::ROLLOUT, step as u64]),
            )
            .unwrap();
            kls.push(row.mean_kl);
        }
        let first: f64 = kls[..20].iter().sum::<f64>() / 20.0;
        let last: f64 = kls[kls.len() - 20..].iter().sum::<f64>() / 20.0;
        assert!(
            last < first * 0.7,
            "KL anchor must pull the policy back: first {first}, last {last}"
        );
    }

    #[test]
    fn equal_seeds_reproduce_rows_and_parameters() {
        let logs = tiny_synth(11);
        let cfg = tiny_cfg();
        let data = prepare_training_data(&logs, &cfg).unwrap();
        let predictor = OverlapPredictor::from_logs(&logs);
        let a = run_training(&data, &predictor, &cfg, None).unwrap();
        let b = run_training(&data, &predictor, &cfg, None).unwrap();
        assert_eq!(a.rows, b.rows);
        for (x, y) in a.state.policy.blocks().into_iter().zip(b.state.policy.blocks()) {
            assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn metrics_files_and_checkpoints_land_in_the_output_directory() {
        let logs = tiny_synth(12);
        let cfg = tiny_cfg();
        let data = prepare_training_data(&logs, &cfg).unwrap();
        let predictor = OverlapPredictor::from_logs(&logs);
        let dir = tempfile::tempdir().unwrap();
        run_training(&data, &predictor, &cfg, Some(dir.path())).unwrap();

        let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        let lines: Vec<&str> = metrics.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines.len(), cfg.steps + 2);
        // Eval column is filled exactly on probe, eval_every, and final steps.
        for (i, line) in lines[1..].iter().enumerate() {
            let evaluated = i == 0 || i % cfg.eval_every == 0 || i == cfg.steps;
            assert_eq!(!line.ends_with(','), evaluated, "row {i}: {line}");
        }
        for step in [0usize, 6, 12] {
            assert!(dir.path().join(format!("checkpoint_{step:06}.ckpt")).exists());
        }
    }

    #[test]
    fn runaway_learning_rate_reports_a_non_finite_update() {
        // Infinity is the cleanest divergence trigger: zero-gradient
        // entries turn into NaN and nonzero ones into +-inf, so the
        // post-update finiteness guard must fire on the first step.
        let logs = tiny_synth(13);
        let mut cfg = TrainerConfig { warmup_steps: 0, ..tiny_cfg() };
        let data = prepare_training_data(&logs, &cfg).unwrap();
        // validate() refuses a non-finite rate, so smuggle it in after
        // data preparation to exercise the runtime guard directly.
        cfg.learning_rate = f64::INFINITY;
        let init = PolicyParameters::init_random(
            data.vocab.size(),
            cfg.hidden_width,
            &mut substream(cfg.seed, &[stream::PARAM_INIT]),
        );
        let mut state = PolicyState::new(init);
        let batch: Vec<&Episode> = data.train.iter().take(cfg.batch_size).collect();
        let err = train_step(
            &mut state,
            &data.vocab,
            &batch,
            &TruthOracle,
            &cfg,
            1,
            &mut substream(cfg.seed, &[stream::ROLLOUT, 1]),
        )
        .unwrap_err();
        assert!(matches!(err, TrainError::NonFiniteUpdate { step: 1 }));
    }

    #[test]
    fn too_small_corpus_is_rejected() {
        let logs = tiny_synth(14);
        let cfg = TrainerConfig { batch_size: 1000, ..tiny_cfg() };
        let data = prepare_training_data(&logs, &cfg).unwrap();
        let predictor = OverlapPredictor::from_logs(&logs);
        let err = run_training(&data, &predictor, &cfg, None).unwrap_err();
        assert!(matches!(err, TrainError::InvalidConfig(_)));
    }

    #[test]
    fn sampled_summaries_stay_within_policy_support() {
        // Spot-check that rollouts re-evaluate to their stored log-probs,
        // tying the trainer's sampling path to sequence_log_prob.
        let logs = tiny_synth(15);
        let cfg = tiny_cfg();
        let data = prepare_training_data(&logs, &cfg).unwrap();
        let init = PolicyParameters::init_random(
            data.vocab.size(),
            cfg.hidden_width,
            &mut substream(cfg.seed, &[stream::PARAM_INIT]),
        );
        let state = PolicyState::new(init);
        let mut rng = substream(cfg.seed, &[stream::ROLLOUT, 1]);
        for ep in data.train.iter().take(4) {
            let s = sample_summary(
                &state.policy,
                &data.vocab,
                &ep.features,
                cfg.policy_temperature,
                cfg.max_summary_len,
                &mut rng,
            )
            .unwrap();
            let direct =
                sequence_log_prob(&state.policy, &ep.features, &s.token_ids).unwrap();
            let stored: f64 = s.step_log_probs.iter().sum();
            assert!((direct - stored).abs() < 1e-9);
        }
    }
}
