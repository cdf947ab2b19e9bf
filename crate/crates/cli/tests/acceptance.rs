//! Acceptance suite. Each test is one shipped criterion; the harness
//! prints one pass/fail line per criterion, and `--nocapture` shows the
//! measured numbers behind each verdict.
//!
//! The three training-behavior criteria (5, 6, 7) share a set of
//! desk-scale runs built once in [`desk`]; everything else is
//! self-contained.

use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use rlpf_cli::run_command;
use rlpf_core::corpus::{
    synth_generate, MultipleChoiceQuestion, SynthConfig, TemplateId,
};
use rlpf_core::evalharness::{
    aggregate_win_rates, auto_rate_pair, build_baseline_context, build_rater_prompt,
    paired_t_test, rouge_lsum, run_mcq_task, BaselineKind, BaselineSpec, CRITERIA,
};
use rlpf_core::judge::{
    build_prediction_prompt, EndpointConfig, JudgeError, OverlapPredictor, PredictionOutcome,
    Predictor, TextCompleter,
};
use rlpf_core::reward::{combine, length_reward, prediction_reward, RewardConfig};
use rlpf_core::rng::{stream, substream};
use rlpf_core::textmodel::{
    episode_kl, grad_episode_kl, grad_log_prob, kl_step, sample_summary, sequence_log_prob,
    PolicyParameters, PolicyState, ValueParameters,
};
use rlpf_core::trainer::{
    prepare_training_data, run_training, train_step, Episode, RunArtifacts, TrainerConfig,
    TrainingData,
};

fn pass(criterion: u32, detail: impl std::fmt::Display) {
    println!("PASS criterion {criterion}: {detail}");
}

// ---------------------------------------------------------------------
// 1. Gradient correctness against central finite differences.
// ---------------------------------------------------------------------

/// Central finite differences over every policy parameter, h = 1e-5.
fn fd_grad(
    params: &PolicyParameters,
    eval: &dyn Fn(&PolicyParameters) -> f64,
) -> PolicyParameters {
    let h = 1e-5;
    let mut grad = PolicyParameters::zeros(params.v, params.h);
    for block in 0..4 {
        for i in 0..params.blocks()[block].len() {
            let mut plus = params.clone();
            plus.blocks_mut()[block][i] += h;
            let mut minus = params.clone();
            minus.blocks_mut()[block][i] -= h;
            grad.blocks_mut()[block][i] = (eval(&plus) - eval(&minus)) / (2.0 * h);
        }
    }
    grad
}

fn max_rel_err(analytic: &PolicyParameters, numeric: &PolicyParameters) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.blocks().into_iter().zip(numeric.blocks()) {
        for (&x, &y) in a.iter().zip(n) {
            let denom = x.abs().max(y.abs()).max(1e-6);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}

#[test]
fn c01_gradients_match_finite_differences() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for instance in 0..20u64 {
        let mut rng = substream(401, &[instance]);
        let v = rng.gen_range(6..=16);
        let h = rng.gen_range(2..=8);
        let params = PolicyParameters::init_random(v, h, &mut rng);
        let reference = PolicyParameters::init_random(v, h, &mut rng);
        let features: Vec<f64> = (0..v).map(|_| rng.gen_range(0..4) as f64).collect();
        let len = rng.gen_range(1..=6);
        let tokens: Vec<usize> = (0..len).map(|_| rng.gen_range(0..v)).collect();
        let weight = rng.gen_range(-2.0..2.0);

        let analytic = grad_log_prob(&params, &features, &tokens, weight).unwrap();
        let numeric = fd_grad(&params, &|p| {
            weight * sequence_log_prob(p, &features, &tokens).unwrap()
        });
        worst = worst.max(max_rel_err(&analytic, &numeric));

        let analytic = grad_episode_kl(&params, &reference, &features, &tokens).unwrap();
        let numeric =
            fd_grad(&params, &|p| episode_kl(p, &reference, &features, &tokens).unwrap());
        worst = worst.max(max_rel_err(&analytic, &numeric));

        // Value model: gradient of 0.5 * (prediction - target)^2.
        let mut value = ValueParameters::zeros(v);
        for w in value.weights.iter_mut() {
            *w = rng.gen_range(-0.5..0.5);
        }
        value.bias = rng.gen_range(-0.5..0.5);
        let target = rng.gen_range(-1.0..1.0);
        let analytic = value.grad(&features, value.predict(&features) - target);
        let fd = 1e-5;
        for i in 0..v {
            let mut plus = value.clone();
            plus.weights[i] += fd;
            let mut minus = value.clone();
            minus.weights[i] -= fd;
            let numeric = (0.5 * (plus.predict(&features) - target).powi(2)
                - 0.5 * (minus.predict(&features) - target).powi(2))
                / (2.0 * fd);
            let denom = analytic.weights[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic.weights[i] - numeric).abs() / denom);
        }
    }
    let elapsed = start.elapsed();
    assert!(worst < 1e-4, "max relative error {worst:.3e} >= 1e-4");
    assert!(elapsed.as_secs_f64() < 10.0, "gradient check took {elapsed:?}");
    pass(1, format!("max relative error {worst:.3e} in {elapsed:.2?}"));
}

// ---------------------------------------------------------------------
// 2. KL identity, nonnegativity, and zero gradient at the anchor.
// ---------------------------------------------------------------------

#[test]
fn c02_kl_identity_nonnegativity_and_anchor_gradient() {
    let mut rng = substream(402, &[1]);
    let (v, h) = (24, 6);
    let params = PolicyParameters::init_random(v, h, &mut rng);
    let other = PolicyParameters::init_random(v, h, &mut rng);

    let mut worst_self: f64 = 0.0;
    let mut min_cross = f64::INFINITY;
    for _ in 0..1000 {
        let features: Vec<f64> = (0..v).map(|_| rng.gen_range(0..5) as f64).collect();
        let prev = rng.gen_range(0..v);
        let self_kl = kl_step(&params, &params, &features, prev).unwrap();
        worst_self = worst_self.max(self_kl.abs());
        let cross_kl = kl_step(&params, &other, &features, prev).unwrap();
        min_cross = min_cross.min(cross_kl);
    }
    assert!(worst_self <= 1e-12, "KL(pi, pi) reached {worst_self:.3e}");
    assert!(min_cross >= -1e-12, "KL dipped to {min_cross:.3e}");

    let features: Vec<f64> = (0..v).map(|_| rng.gen_range(0..5) as f64).collect();
    let tokens: Vec<usize> = (0..8).map(|_| rng.gen_range(0..v)).collect();
    let grad = grad_episode_kl(&params, &params.clone(), &features, &tokens).unwrap();
    let mut worst_grad: f64 = 0.0;
    for block in grad.blocks() {
        for &g in block {
            worst_grad = worst_grad.max(g.abs());
        }
    }
    assert!(worst_grad <= 1e-8, "KL gradient at the anchor reached {worst_grad:.3e}");
    pass(
        2,
        format!(
            "|KL(pi,pi)| <= {worst_self:.1e}, min KL {min_cross:.1e}, anchor grad <= {worst_grad:.1e}"
        ),
    );
}

// ---------------------------------------------------------------------
// 3. Reward arithmetic: anchors exact, combination bit-exact.
// ---------------------------------------------------------------------

#[test]
fn c03_reward_anchors_and_bit_exact_combination() {
    let full = RewardConfig::full_scale();
    assert_eq!(length_reward(268, &full), 0.0);
    assert_eq!(length_reward(368, &full), -0.3);
    assert_eq!(length_reward(200, &full), 1e-4);

    let mut rng = substream(403, &[1]);
    for _ in 0..10_000 {
        let cfg = RewardConfig {
            w: rng.gen_range(0.0..4.0),
            cap_c: rng.gen_range(1e-6..1.0),
            beta: rng.gen_range(1e-6..1.0),
            target_len: rng.gen_range(1..400),
        };
        let l = rng.gen_range(0..600);
        let correct = rng.gen_bool(0.5);
        let outcome = PredictionOutcome {
            chosen: if correct { Some(2) } else { None },
            raw_response: None,
            scores: None,
            retries: 0,
        };
        let r_pred = prediction_reward(&outcome, 2);
        let r_len = length_reward(l, &cfg);
        let expected = r_pred + cfg.w * r_len;
        let combined = combine(r_pred, r_len, &cfg);
        assert!(
            combined.to_bits() == expected.to_bits(),
            "combined {combined:?} != r_pred + w*r_len {expected:?}"
        );
    }
    pass(3, "3 anchors exact, 10k combinations bit-exact");
}

// ---------------------------------------------------------------------
// 4. Warm-up contract: 100 value-only steps.
// ---------------------------------------------------------------------

#[test]
fn c04_warmup_trains_value_only() {
    let start = Instant::now();
    // A large catalog and short summaries make the frozen predictor's
    // outcome close to deterministic per episode (random summaries
    // rarely overlap any choice, so the tie-break decides), which gives
    // the value baseline a strong learnable signal.
    let synth = SynthConfig {
        num_users: 40,
        num_genres: 4,
        catalog_size: 128,
        activities_per_user: 24,
        dirichlet_alpha: 0.05,
        seed: 11,
    };
    let cfg = TrainerConfig {
        warmup_steps: 100,
        steps: 100,
        context_len: 8,
        batch_size: 16,
        max_summary_len: 2,
        value_learning_rate: 1.5e-2,
        ..TrainerConfig::default()
    };
    let (logs, _) = synth_generate(&synth).unwrap();
    let data = prepare_training_data(&logs, &cfg).unwrap();
    let predictor = OverlapPredictor::from_logs(&logs);

    let init = PolicyParameters::init_random(
        data.vocab.size(),
        cfg.hidden_width,
        &mut substream(cfg.seed, &[stream::PARAM_INIT]),
    );
    let mut state = PolicyState::new(init.clone());

    // Frozen probe: fixed episodes, summaries sampled once, rewards
    // computed once; only the value model's fit to them may change.
    let probe: Vec<&Episode> = data.train.iter().take(cfg.batch_size).collect();
    let mut probe_rng = substream(cfg.seed, &[stream::PROBE]);
    let mut targets = Vec::with_capacity(probe.len());
    for ep in &probe {
        let summary = sample_summary(
            &state.policy,
            &data.vocab,
            &ep.features,
            cfg.policy_temperature,
            cfg.max_summary_len,
            &mut probe_rng,
        )
        .unwrap();
        let outcome = predictor.predict(&summary.text, &ep.mcq).unwrap();
        let r_pred = prediction_reward(&outcome, ep.mcq.truth_index);
        let r_len = length_reward(summary.token_length, &cfg.reward);
        targets.push(combine(r_pred, r_len, &cfg.reward));
    }
    let probe_mse = |state: &PolicyState| -> f64 {
        probe
            .iter()
            .zip(&targets)
            .map(|(ep, &t)| (t - state.value.predict(&ep.features)).powi(2))
            .sum::<f64>()
            / probe.len() as f64
    };
    let mse_before = probe_mse(&state);

    for step in 1..=100usize {
        let batch: Vec<&Episode> = data.train[..cfg.batch_size].iter().collect();
        let mut rollout_rng = substream(cfg.seed, &[stream::ROLLOUT, step as u64]);
        train_step(&mut state, &data.vocab, &batch, &predictor, &cfg, step, &mut rollout_rng)
            .unwrap();
    }

    assert_eq!(state.policy, init, "policy parameters changed during warm-up");
    assert_eq!(state.reference, init, "reference parameters changed during warm-up");
    let mse_after = probe_mse(&state);
    assert!(
        mse_after <= 0.5 * mse_before,
        "probe value MSE only moved {mse_before:.4} -> {mse_after:.4}"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "warm-up check took {elapsed:?}");
    pass(
        4,
        format!(
            "policy bit-identical, probe MSE {mse_before:.4} -> {mse_after:.4} in {elapsed:.2?}"
        ),
    );
}

// ---------------------------------------------------------------------
// Shared desk-scale runs for criteria 5, 6, and 7.
// ---------------------------------------------------------------------

struct DeskRuns {
    data: TrainingData,
    predictor: OverlapPredictor,
    /// Desk preset: alpha 0.01, w 1.
    base: RunArtifacts,
    base_seconds: f64,
    /// Same but w = 0 (no length reward).
    no_length: RunArtifacts,
}

fn desk() -> &'static DeskRuns {
    static RUNS: OnceLock<DeskRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let cfg = TrainerConfig::default();
        let (logs, _) = synth_generate(&SynthConfig::default()).unwrap();
        let data = prepare_training_data(&logs, &cfg).unwrap();
        let predictor = OverlapPredictor::from_logs(&logs);

        let started = Instant::now();
        let base = run_training(&data, &predictor, &cfg, None).unwrap();
        let base_seconds = started.elapsed().as_secs_f64();

        let mut no_length_cfg = cfg.clone();
        no_length_cfg.reward.w = 0.0;
        let no_length = run_training(&data, &predictor, &no_length_cfg, None).unwrap();

        DeskRuns { data, predictor, base, base_seconds, no_length }
    })
}

fn final_window(run: &RunArtifacts, field: impl Fn(&rlpf_core::trainer::TrainLogRow) -> f64) -> Vec<f64> {
    run.rows.iter().rev().take(100).map(|r| field(r)).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

// Accuracy pins from the first verified desk run (criterion 5 fixes
// them with +/- 0.05 tolerance thereafter). First verified run:
// accuracy 0.2480 -> 0.5260, last_4 baseline 0.3840, 18 s.
const PINNED_STEP0_ACCURACY: f64 = 0.248;
const PINNED_FINAL_ACCURACY: f64 = 0.526;

#[test]
fn c05_desk_training_beats_start_and_truncation_baseline() {
    let runs = desk();
    let acc0 = runs.base.rows[0].eval_accuracy.expect("step-0 eval");
    let accf = runs.base.rows.last().unwrap().eval_accuracy.expect("final eval");

    let mean_len = mean(&final_window(&runs.base, |r| r.mean_summary_len));
    let x = mean_len.round().max(1.0) as usize;
    let spec = BaselineSpec { kind: BaselineKind::LastX, x };
    let cfg = TrainerConfig::default();
    let inputs: Vec<String> = runs
        .data
        .test
        .iter()
        .enumerate()
        .map(|(i, ep)| {
            build_baseline_context(&ep.example, spec, cfg.template, cfg.seed.wrapping_add(i as u64))
                .unwrap()
        })
        .collect();
    let mcqs: Vec<MultipleChoiceQuestion> =
        runs.data.test.iter().map(|ep| ep.mcq.clone()).collect();
    let baseline = run_mcq_task(&inputs, &mcqs, &runs.predictor, 1).unwrap();

    eprintln!(
        "criterion 5 measured: acc0 {acc0:.4} accf {accf:.4} mean_len {mean_len:.2} \
         last_{x} baseline {:.4} wall {:.1} s",
        baseline.accuracy, runs.base_seconds
    );
    assert!(
        accf - acc0 >= 0.15,
        "accuracy gain {acc0:.3} -> {accf:.3} is below +0.15"
    );
    assert!(
        accf > baseline.accuracy,
        "final accuracy {accf:.3} does not beat last_{x} baseline {:.3}",
        baseline.accuracy
    );
    assert!(
        (acc0 - PINNED_STEP0_ACCURACY).abs() <= 0.05,
        "step-0 accuracy {acc0:.3} drifted from pinned {PINNED_STEP0_ACCURACY:.3}"
    );
    assert!(
        (accf - PINNED_FINAL_ACCURACY).abs() <= 0.05,
        "final accuracy {accf:.3} drifted from pinned {PINNED_FINAL_ACCURACY:.3}"
    );
    assert!(
        runs.base_seconds < 900.0,
        "desk run took {:.0} s, budget is 15 min",
        runs.base_seconds
    );
    pass(
        5,
        format!(
            "accuracy {acc0:.3} -> {accf:.3}, last_{x} baseline {:.3}, {:.0} s",
            baseline.accuracy, runs.base_seconds
        ),
    );
}

#[test]
fn c06_length_reward_shapes_summary_length() {
    let runs = desk();
    let target = TrainerConfig::default().reward.target_len as f64;
    let with_w = final_window(&runs.base, |r| r.mean_summary_len);
    let without_w = final_window(&runs.no_length, |r| r.mean_summary_len);

    let mean_with = mean(&with_w);
    let mean_without = mean(&without_w);
    let band_ok = (mean_with - target).abs() <= 0.2 * target;

    // The w=0 run must not also sit on the target: the per-step mean
    // lengths of the two runs differ significantly.
    let (t, p) = paired_t_test(&with_w, &without_w).unwrap();
    let contrast_ok = p < 0.05 && (mean_without - target).abs() > 0.2 * target;

    if band_ok && contrast_ok {
        pass(
            6,
            format!(
                "w=1 mean length {mean_with:.2} (target {target}), \
                 w=0 mean {mean_without:.2}, p={p:.2e}"
            ),
        );
    } else {
        eprintln!(
            "FAIL criterion 6: w=1 final-window mean length {mean_with:.2} \
             {} target {target} +/- 20%; w=0 mean {mean_without:.2} \
             (t={t:.1}, p={p:.2e}) {} converge to the target",
            if band_ok { "within" } else { "outside" },
            if contrast_ok { "does not" } else { "does" },
        );
        panic!(
            "w=1 final-window mean length {mean_with:.2} outside {target} +/- 20% \
             (w=0 contrast: mean {mean_without:.2}, p={p:.2e})"
        );
    }
}

#[test]
fn c07_kl_anchor_lowers_final_window_kl() {
    // Two otherwise-identical runs, alpha 0.01 vs 0. Mean episode KL is
    // a sum over a summary's steps, so the comparison is only meaningful
    // while both runs write summaries of comparable length; the horizon
    // is kept short enough (600 steps) that neither run has entered the
    // late regime where episode length itself diverges between them.
    let mut cfg = TrainerConfig::default();
    cfg.steps = 600;
    let (logs, _) = synth_generate(&SynthConfig::default()).unwrap();
    let data = prepare_training_data(&logs, &cfg).unwrap();
    let predictor = OverlapPredictor::from_logs(&logs);

    let anchored_run = run_training(&data, &predictor, &cfg, None).unwrap();
    let mut no_anchor_cfg = cfg.clone();
    no_anchor_cfg.alpha = 0.0;
    let unanchored_run = run_training(&data, &predictor, &no_anchor_cfg, None).unwrap();

    let anchored = mean(&final_window(&anchored_run, |r| r.mean_kl));
    let unanchored = mean(&final_window(&unanchored_run, |r| r.mean_kl));
    assert!(
        anchored < unanchored,
        "final-window KL {anchored:.3} (alpha 0.01) not below {unanchored:.3} (alpha 0)"
    );
    pass(7, format!("final-window mean KL {anchored:.4} < {unanchored:.4}"));
}

// ---------------------------------------------------------------------
// 8. Train determinism through the command line.
// ---------------------------------------------------------------------

#[test]
fn c08_train_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.conf");
    std::fs::write(
        &config_path,
        "seed = 23\n\
         synth.num_users = 40\n\
         synth.num_genres = 4\n\
         synth.catalog_size = 16\n\
         synth.activities_per_user = 14\n\
         trainer.batch_size = 8\n\
         trainer.steps = 30\n\
         trainer.warmup_steps = 5\n\
         trainer.eval_every = 15\n\
         trainer.context_len = 10\n\
         trainer.vocab_size = 128\n\
         trainer.hidden_width = 8\n\
         trainer.max_summary_len = 10\n",
    )
    .unwrap();
    let config = config_path.to_str().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let run = |args: &[&str]| run_command(args.iter().map(|s| s.to_string()));
    assert_eq!(run(&["synth", "--config", config, "--out", corpus.to_str().unwrap()]), 0);

    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let code = run(&[
            "train",
            "--config",
            config,
            "--corpus",
            corpus.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
    }

    let mut names: Vec<String> = std::fs::read_dir(&out_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.contains(&"metrics.csv".to_string()));
    assert!(names.iter().any(|n| n.starts_with("checkpoint_")));
    for name in &names {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "artifact {name} differs between identical runs");
    }
    pass(8, format!("{} artifacts byte-identical across two runs", names.len()));
}

// ---------------------------------------------------------------------
// 9. Evaluation oracles: uniform predictor, ROUGE, paired t.
// ---------------------------------------------------------------------

struct UniformPredictor(Mutex<ChaCha8Rng>);

impl Predictor for UniformPredictor {
    fn predict(
        &self,
        _summary_text: &str,
        _mcq: &MultipleChoiceQuestion,
    ) -> Result<PredictionOutcome, JudgeError> {
        let choice = self.0.lock().unwrap().gen_range(0..4);
        Ok(PredictionOutcome {
            chosen: Some(choice),
            raw_response: None,
            scores: None,
            retries: 0,
        })
    }
}

#[test]
fn c09_evaluation_oracles() {
    // Uniform predictor on 10k questions: accuracy 0.25 within 3 sigma.
    let n = 10_000usize;
    let mut truth_rng = substream(409, &[1]);
    let mcqs: Vec<MultipleChoiceQuestion> = (0..n)
        .map(|i| {
            let names = [
                format!("item{i}a"),
                format!("item{i}b"),
                format!("item{i}c"),
                format!("item{i}d"),
            ];
            MultipleChoiceQuestion { choices: names, truth_index: truth_rng.gen_range(0..4) }
        })
        .collect();
    let inputs: Vec<String> = (0..n).map(|i| format!("summary {i}")).collect();
    let predictor = UniformPredictor(Mutex::new(substream(409, &[2])));
    let run = run_mcq_task(&inputs, &mcqs, &predictor, 1).unwrap();
    let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
    assert!(
        (run.accuracy - 0.25).abs() <= 3.0 * sigma,
        "uniform predictor accuracy {:.4} outside 0.25 +/- {:.4}",
        run.accuracy,
        3.0 * sigma
    );

    // ROUGE-Lsum worked examples.
    assert_eq!(rouge_lsum("the cat sat", "the cat sat"), 1.0);
    assert_eq!(rouge_lsum("alpha beta", "gamma delta"), 0.0);
    assert_eq!(rouge_lsum("the cat sat", "the cat ran"), 2.0 / 3.0);

    // Paired t-test hand example: diffs [1, 0, 0, 1] give t = sqrt(3).
    let a = [1.0, 0.0, 1.0, 1.0];
    let b = [0.0, 0.0, 1.0, 0.0];
    let (t, p) = paired_t_test(&a, &b).unwrap();
    assert!((t - 1.732).abs() < 1e-3, "t = {t}");
    assert!((p - 0.181_690_113_8).abs() < 1e-6, "p = {p}");
    pass(
        9,
        format!("uniform accuracy {:.4}, ROUGE anchors exact, t {t:.4} p {p:.6}", run.accuracy),
    );
}

// ---------------------------------------------------------------------
// 10. Auto-rater position debiasing against a biased mock rater.
// ---------------------------------------------------------------------

/// Mock rater with maximal position bias: the first summary always wins
/// every criterion.
struct FirstAlwaysWins;

impl TextCompleter for FirstAlwaysWins {
    fn complete(&self, _: &str, _: f64, _: u32) -> Result<String, String> {
        Ok("Factuality: 0\nAbstractiveness: 0\nReadability: 0\nOverall: 0".to_string())
    }
}

#[test]
fn c10_rater_placement_randomization_cancels_position_bias() {
    let n = 10_000usize;
    let cfg = EndpointConfig::default();
    let mut results = Vec::with_capacity(n);
    for i in 0..n {
        results.push(
            auto_rate_pair("candidate", "reference", "history", &FirstAlwaysWins, &cfg, i as u64)
                .unwrap(),
        );
    }
    let rows = aggregate_win_rates(&results);
    assert_eq!(rows.len(), CRITERIA.len());
    for row in &rows {
        assert_eq!(
            row.wins + row.equal + row.losses + row.excluded,
            n,
            "{}: counts do not reconcile",
            row.criterion
        );
        let rate = row.win_rate.expect("every pair parsed");
        assert!(
            (rate - 0.5).abs() <= 0.02,
            "{}: win rate {rate:.4} outside 0.5 +/- 0.02",
            row.criterion
        );
    }
    pass(
        10,
        format!(
            "per-criterion win rates {:?} within 0.5 +/- 0.02",
            rows.iter().map(|r| r.win_rate.unwrap()).collect::<Vec<_>>()
        ),
    );
}

// ---------------------------------------------------------------------
// 11. Prompt golden files.
// ---------------------------------------------------------------------

fn golden(name: &str) -> String {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("cannot read {path:?}: {e}"))
}

#[test]
fn c11_prompts_match_golden_files() {
    let movies = MultipleChoiceQuestion {
        choices: [
            "Midnight Harbor (2016)",
            "The Quiet Orchard (2019)",
            "Steel Meridian (2014)",
            "Glass Paradox (2021)",
        ]
        .map(str::to_string),
        truth_index: 2,
    };
    let prompt = build_prediction_prompt(
        "I watch mostly science fiction thrillers, rate them 4 or 5, and avoid romance.",
        &movies,
        TemplateId::Movies,
    );
    assert!(prompt.contains("which movie will I watch next"));
    assert_eq!(prompt, golden("prediction_prompt_movies.txt"), "movies prompt drifted");

    let products = MultipleChoiceQuestion {
        choices: [
            "wireless earbuds",
            "trail running shoes",
            "stainless water bottle",
            "mechanical keyboard",
        ]
        .map(str::to_string),
        truth_index: 0,
    };
    let prompt = build_prediction_prompt(
        "Frequent buyer of outdoor gear and fitness accessories, typically rating purchases 4.",
        &products,
        TemplateId::Products,
    );
    assert_eq!(prompt, golden("prediction_prompt_products.txt"), "products prompt drifted");

    let places = MultipleChoiceQuestion {
        choices: [
            "Harbor Lights Diner",
            "Cedar Trail Park",
            "Union Bookshop",
            "Lakeview Museum",
        ]
        .map(str::to_string),
        truth_index: 1,
    };
    let prompt = build_prediction_prompt(
        "I visit parks and museums across New York, rating most places 4 or 5.",
        &places,
        TemplateId::Places,
    );
    assert_eq!(prompt, golden("prediction_prompt_places.txt"), "places prompt drifted");

    let rater = build_rater_prompt(
        "[The Quiet Orchard (2019), 4.5]\n[Steel Meridian (2014), 3]",
        "Enjoys slow dramas and classic thrillers; consistent high ratings.",
        "Watches many genres with no clear preference.",
    );
    assert!(rater.contains("Respond 0 if the first summary"));
    assert_eq!(rater, golden("rater_prompt.txt"), "rater prompt drifted");
    pass(11, "4 golden prompts byte-identical, required substrings present");
}
