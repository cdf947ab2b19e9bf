//! Downstream evaluation of summaries: multiple-choice prediction
//! tasks, top-k attribute recall, review-generation scoring, truncated
//! raw-context baselines, pairwise auto-rating, and paired
//! significance tests, all gathered into a serializable report.
//!
//! Every task returns its per-example scores alongside the mean so two
//! runs over the same example list can be compared with a paired t
//! test afterwards.

pub mod autorater;
pub mod baselines;
pub mod rouge;
pub mod stats;

pub use autorater::{
    aggregate_win_rates, auto_rate_pair, build_rater_prompt, parse_rater_response, RatePairResult,
    Verdict, WinRateRow, CRITERIA,
};
pub use baselines::{build_baseline_context, BaselineKind, BaselineSpec};
pub use rouge::rouge_lsum;
pub use stats::{
    chi_square_statistic, ln_gamma, paired_t_test, regularized_incomplete_beta,
    student_t_two_sided_p, StatsError,
};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_mcq_with, CorpusError, MultipleChoiceQuestion, TemplateId};
use crate::judge::{jaccard, predict_batch, JudgeError, Predictor};
use crate::text::token_set;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("aligned inputs differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("x={x} exceeds the {available} available context records")]
    InvalidX { x: usize, available: usize },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    McqFutureActivity,
    McqRating,
    TopkAttribute,
    ReviewGeneration,
}

impl TaskKind {
    pub fn parse(s: &str) -> Option<TaskKind> {
        match s {
            "mcq_future_activity" => Some(TaskKind::McqFutureActivity),
            "mcq_rating" => Some(TaskKind::McqRating),
            "topk_attribute" => Some(TaskKind::TopkAttribute),
            "review_generation" => Some(TaskKind::ReviewGeneration),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::McqFutureActivity => "mcq_future_activity",
            TaskKind::McqRating => "mcq_rating",
            TaskKind::TopkAttribute => "topk_attribute",
            TaskKind::ReviewGeneration => "review_generation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    RecallAtK,
    RougeLsum,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::RecallAtK => "recall_at_k",
            Metric::RougeLsum => "rouge_lsum",
        }
    }
}

/// One evaluation task to run. `k` and `attribute` only matter for
/// [`TaskKind::TopkAttribute`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub k: usize,
    pub attribute: String,
    pub metric: Metric,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        let fits = matches!(
            (self.kind, self.metric),
            (TaskKind::McqFutureActivity, Metric::Accuracy)
                | (TaskKind::McqRating, Metric::Accuracy)
                | (TaskKind::TopkAttribute, Metric::RecallAtK)
                | (TaskKind::ReviewGeneration, Metric::RougeLsum)
        );
        if !fits {
            return Err(EvalError::Invalid(format!(
                "metric {} does not fit task {}",
                self.metric.name(),
                self.kind.name()
            )));
        }
        if self.kind == TaskKind::TopkAttribute {
            if self.k == 0 {
                return Err(EvalError::Invalid("top-k task needs k >= 1".into()));
            }
            if self.attribute.is_empty() {
                return Err(EvalError::Invalid("top-k task needs an attribute name".into()));
            }
        }
        Ok(())
    }

    /// Row label for reports: the kind, plus the attribute for top-k.
    pub fn label(&self) -> String {
        match self.kind {
            TaskKind::TopkAttribute => format!("topk_{}", self.attribute),
            kind => kind.name().to_string(),
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn check_aligned(left: usize, right: usize) -> Result<(), EvalError> {
    if left == 0 {
        return Err(EvalError::EmptyEvalSet);
    }
    if left != right {
        return Err(EvalError::LengthMismatch { left, right });
    }
    Ok(())
}

/// Outcome of a multiple-choice run. Unparseable predictor responses
/// score 0 and are tallied separately.
#[derive(Debug, Clone, PartialEq)]
pub struct McqRun {
    pub accuracy: f64,
    pub per_example: Vec<f64>,
    pub unparseable: usize,
}

pub fn run_mcq_task<P: Predictor + ?Sized>(
    inputs: &[String],
    mcqs: &[MultipleChoiceQuestion],
    predictor: &P,
    concurrency: usize,
) -> Result<McqRun, EvalError> {
    check_aligned(inputs.len(), mcqs.len())?;
    let items: Vec<(&str, &MultipleChoiceQuestion)> =
        inputs.iter().map(String::as_str).zip(mcqs).collect();
    let outcomes = predict_batch(predictor, &items, concurrency)?;
    let mut per_example = Vec::with_capacity(outcomes.len());
    let mut unparseable = 0usize;
    for (outcome, mcq) in outcomes.iter().zip(mcqs) {
        if outcome.is_unparseable() {
            unparseable += 1;
        }
        per_example.push(if outcome.chosen == Some(mcq.truth_index) { 1.0 } else { 0.0 });
    }
    Ok(McqRun { accuracy: mean(&per_example), per_example, unparseable })
}

/// Scores every vocabulary entry by Jaccard overlap with the summary's
/// token set and returns the k best, ties broken lexicographically.
pub fn rank_topk(summary: &str, vocabulary: &[String], k: usize) -> Vec<String> {
    let summary_tokens = token_set(summary);
    let mut scored: Vec<(f64, &String)> = vocabulary
        .iter()
        .map(|entry| (jaccard(&summary_tokens, &token_set(entry)), entry))
        .collect();
    scored.sort_by(|(sa, na), (sb, nb)| {
        sb.partial_cmp(sa).expect("overlap scores are finite").then_with(|| na.cmp(nb))
    });
    scored.into_iter().take(k).map(|(_, name)| name.clone()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopkRun {
    pub recall: f64,
    pub per_example: Vec<f64>,
}

/// Fraction of examples whose label lands in the top k entries ranked
/// from that example's candidate vocabulary.
pub fn run_topk_task(
    inputs: &[String],
    labels: &[String],
    vocabularies: &[Vec<String>],
    k: usize,
) -> Result<TopkRun, EvalError> {
    check_aligned(inputs.len(), labels.len())?;
    check_aligned(inputs.len(), vocabularies.len())?;
    let mut per_example = Vec::with_capacity(inputs.len());
    for ((input, label), vocabulary) in inputs.iter().zip(labels).zip(vocabularies) {
        if k > vocabulary.len() {
            return Err(EvalError::Invalid(format!(
                "k={k} exceeds the candidate vocabulary of {} entries",
                vocabulary.len()
            )));
        }
        let hit = rank_topk(input, vocabulary, k).iter().any(|p| p == label);
        per_example.push(if hit { 1.0 } else { 0.0 });
    }
    Ok(TopkRun { recall: mean(&per_example), per_example })
}

/// Rating scale presented as answer choices: half-point steps for
/// movies, whole points elsewhere.
pub fn rating_grid(template: TemplateId) -> Vec<f64> {
    match template {
        TemplateId::Movies => (1..=10).map(|i| i as f64 * 0.5).collect(),
        TemplateId::Products | TemplateId::Places => (1..=5).map(|i| i as f64).collect(),
    }
}

fn fmt_rating_choice(rating: f64) -> String {
    if rating.fract() == 0.0 {
        format!("{rating:.0}")
    } else {
        format!("{rating}")
    }
}

/// Four-way rating question: the true rating plus three distinct other
/// grid values, truth slot drawn from `rng`.
pub fn build_rating_mcq(
    target_rating: f64,
    template: TemplateId,
    rng: &mut ChaCha8Rng,
) -> Result<MultipleChoiceQuestion, EvalError> {
    let grid = rating_grid(template);
    if !grid.contains(&target_rating) {
        return Err(EvalError::Invalid(format!(
            "rating {target_rating} is not on the {} grid",
            template.name()
        )));
    }
    let mut pool: Vec<f64> = grid.into_iter().filter(|&g| g != target_rating).collect();
    for i in 0..3 {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    let negatives: Vec<String> = pool[..3].iter().map(|&r| fmt_rating_choice(r)).collect();
    Ok(build_mcq_with(&fmt_rating_choice(target_rating), &negatives, rng)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReviewRun {
    pub mean_f1: f64,
    pub per_example: Vec<f64>,
}

/// Pure-metric half of the review task: LCS F1 of each generated
/// review against its reference. Producing the candidate reviews
/// requires a text endpoint and happens upstream.
pub fn score_review_generation(
    candidates: &[String],
    references: &[String],
) -> Result<ReviewRun, EvalError> {
    check_aligned(candidates.len(), references.len())?;
    let per_example: Vec<f64> =
        candidates.iter().zip(references).map(|(c, r)| rouge_lsum(c, r)).collect();
    Ok(ReviewRun { mean_f1: mean(&per_example), per_example })
}

/// One (task, input variant) row of an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: String,
    /// What was fed to the predictor: "policy" or a baseline label.
    pub input_variant: String,
    pub metric: Metric,
    pub value: f64,
    pub examples: usize,
    pub per_example: Vec<f64>,
}

impl TaskResult {
    pub fn new(
        task: impl Into<String>,
        input_variant: impl Into<String>,
        metric: Metric,
        per_example: Vec<f64>,
    ) -> TaskResult {
        TaskResult {
            task: task.into(),
            input_variant: input_variant.into(),
            metric,
            value: mean(&per_example),
            examples: per_example.len(),
            per_example,
        }
    }
}

/// Paired comparison of one task across two runs. `t` and `delta` are
/// oriented as run A minus run B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub task: String,
    pub variant_a: String,
    pub variant_b: String,
    pub value_a: f64,
    pub value_b: f64,
    pub delta: f64,
    pub t_statistic: f64,
    pub p_value: f64,
}

pub const RESULTS_CSV_HEADER: &str = "task,input_variant,metric,value,examples";
pub const WIN_RATES_CSV_HEADER: &str = "dataset,criterion,wins,equal,losses,excluded,win_rate";
pub const COMPARISON_CSV_HEADER: &str =
    "task,variant_a,variant_b,value_a,value_b,delta,t_statistic,p_value";

/// Everything one `eval` invocation produced.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub results: Vec<TaskResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub win_rates: Vec<WinRateRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub comparisons: Vec<ComparisonRow>,
}

impl EvalReport {
    /// Internal consistency: metric values are means of per-example
    /// scores in [0,1], win rates match their tallies, counts line up.
    pub fn validate(&self) -> Result<(), EvalError> {
        for result in &self.results {
            if result.per_example.len() != result.examples {
                return Err(EvalError::Invalid(format!(
                    "task {}: {} per-example scores but examples={}",
                    result.task,
                    result.per_example.len(),
                    result.examples
                )));
            }
            let in_range = |v: f64| (0.0..=1.0).contains(&v);
            if !in_range(result.value) || !result.per_example.iter().copied().all(in_range) {
                return Err(EvalError::Invalid(format!(
                    "task {}: metric values must lie in [0,1]",
                    result.task
                )));
            }
            if (result.value - mean(&result.per_example)).abs() > 1e-9 {
                return Err(EvalError::Invalid(format!(
                    "task {}: value {} is not the mean of its per-example scores",
                    result.task, result.value
                )));
            }
        }
        for row in &self.win_rates {
            match row.win_rate {
                Some(rate) => {
                    if row.rated() == 0 || !(0.0..=1.0).contains(&rate) {
                        return Err(EvalError::Invalid(format!(
                            "criterion {}: win rate {rate} inconsistent with tallies",
                            row.criterion
                        )));
                    }
                    if (rate - row.wins as f64 / row.rated() as f64).abs() > 1e-12 {
                        return Err(EvalError::Invalid(format!(
                            "criterion {}: win rate {rate} does not match {}/{} rated",
                            row.criterion,
                            row.wins,
                            row.rated()
                        )));
                    }
                }
                None => {
                    if row.rated() != 0 {
                        return Err(EvalError::Invalid(format!(
                            "criterion {}: {} rated pairs but no win rate",
                            row.criterion,
                            row.rated()
                        )));
                    }
                }
            }
        }
        for cmp in &self.comparisons {
            if !(0.0..=1.0).contains(&cmp.p_value) || !cmp.t_statistic.is_finite() {
                return Err(EvalError::Invalid(format!(
                    "comparison {}: invalid test statistics",
                    cmp.task
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<EvalReport, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Invalid(format!("bad report json: {e}")))
    }

    pub fn results_csv(&self) -> String {
        let mut out = String::from(RESULTS_CSV_HEADER);
        for r in &self.results {
            out.push_str(&format!(
                "\n{},{},{},{},{}",
                r.task,
                r.input_variant,
                r.metric.name(),
                r.value,
                r.examples
            ));
        }
        out.push('\n');
        out
    }

    pub fn win_rates_csv(&self, dataset: &str) -> String {
        let mut out = String::from(WIN_RATES_CSV_HEADER);
        for row in &self.win_rates {
            out.push('\n');
            out.push_str(&row.csv_row(dataset));
        }
        out.push('\n');
        out
    }

    pub fn comparisons_csv(&self) -> String {
        let mut out = String::from(COMPARISON_CSV_HEADER);
        for c in &self.comparisons {
            out.push_str(&format!(
                "\n{},{},{},{},{},{},{},{}",
                c.task,
                c.variant_a,
                c.variant_b,
                c.value_a,
                c.value_b,
                c.delta,
                c.t_statistic,
                c.p_value
            ));
        }
        out.push('\n');
        out
    }
}

/// Pairs up matching tasks of two runs over the same example list and
/// tests each difference. Rows match on (task, metric) plus input
/// variant when both sides carry it; a task present in only one report
/// is skipped.
pub fn compare_reports(a: &EvalReport, b: &EvalReport) -> Result<Vec<ComparisonRow>, EvalError> {
    let mut rows = Vec::new();
    for ra in &a.results {
        let exact = b
            .results
            .iter()
            .find(|rb| rb.task == ra.task && rb.metric == ra.metric && rb.input_variant == ra.input_variant);
        let rb = match exact {
            Some(rb) => rb,
            None => {
                let mut candidates = b
                    .results
                    .iter()
                    .filter(|rb| rb.task == ra.task && rb.metric == ra.metric);
                match (candidates.next(), candidates.next()) {
                    (Some(only), None) => only,
                    _ => continue,
                }
            }
        };
        if ra.per_example.len() != rb.per_example.len() {
            return Err(EvalError::LengthMismatch {
                left: ra.per_example.len(),
                right: rb.per_example.len(),
            });
        }
        let (t, p) = paired_t_test(&ra.per_example, &rb.per_example)?;
        rows.push(ComparisonRow {
            task: ra.task.clone(),
            variant_a: ra.input_variant.clone(),
            variant_b: rb.input_variant.clone(),
            value_a: ra.value,
            value_b: rb.value,
            delta: ra.value - rb.value,
            t_statistic: t,
            p_value: p,
        });
    }
    if rows.is_empty() {
        return Err(EvalError::Invalid("no comparable tasks between the two reports".into()));
    }
    Ok(rows)
}
