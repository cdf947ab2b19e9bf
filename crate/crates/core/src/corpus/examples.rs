//! Context/target windows, prompt-context rendering, and multiple-choice
//! construction.
//!
//! An example is a window of `n` consecutive activities plus the activity
//! immediately after it as the prediction target. Test examples always
//! target the final record of a log; training targets are drawn uniformly
//! from the remaining eligible positions `[n, len-2]`, so the two splits
//! can never share a target.

use super::{ActivityRecord, CorpusError, Split, UserLog};
use crate::rng::{stream, substream};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Fixed domain word used by the `products` rendering template.
pub const PRODUCTS_DOMAIN: &str = "Books";
/// Fixed state name used by the `places` rendering template.
pub const PLACES_STATE: &str = "New York";

/// The three context-rendering families. They differ in header wording
/// and per-activity line shape; `places` lines carry a city column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateId {
    Movies,
    Products,
    Places,
}

impl TemplateId {
    pub fn parse(s: &str) -> Option<TemplateId> {
        match s {
            "movies" => Some(TemplateId::Movies),
            "products" => Some(TemplateId::Products),
            "places" => Some(TemplateId::Places),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::Movies => "movies",
            TemplateId::Products => "products",
            TemplateId::Places => "places",
        }
    }
}

/// One summarization episode: the rendered context the policy reads and
/// the held-out target activity the predictor is asked about.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub user_id: String,
    pub context_records: Vec<ActivityRecord>,
    pub rendered_context: String,
    pub target: ActivityRecord,
    pub split: Split,
}

/// A four-way question: three sampled negatives plus the true next item
/// at a uniformly random slot.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipleChoiceQuestion {
    pub choices: [String; 4],
    pub truth_index: usize,
}

impl MultipleChoiceQuestion {
    pub fn truth(&self) -> &str {
        &self.choices[self.truth_index]
    }
}

fn fmt_rating(rating: Option<f64>) -> String {
    match rating {
        // Integral ratings print without a decimal point: 4, not 4.0.
        Some(r) if r.fract() == 0.0 => format!("{r:.0}"),
        Some(r) => format!("{r}"),
        None => String::new(),
    }
}

fn activity_line(record: &ActivityRecord, template: TemplateId) -> String {
    let rating = fmt_rating(record.rating);
    match template {
        TemplateId::Movies | TemplateId::Products => format!("[{}, {}]", record.name, rating),
        TemplateId::Places => {
            let city = record
                .attributes
                .get("city")
                .and_then(|v| v.first())
                .map(String::as_str)
                .unwrap_or("");
            format!("[{}, {}, {}]", record.name, city, rating)
        }
    }
}

/// Renders activity records into the full context prompt for `template`,
/// one bracketed line per record in order. Zero records leave an empty
/// activity block between header and footer.
pub fn render_records(records: &[ActivityRecord], template: TemplateId) -> String {
    let lines: Vec<String> = records.iter().map(|r| activity_line(r, template)).collect();
    let activities = lines.join("\n");
    match template {
        TemplateId::Movies => format!(
            "Here is a list of movies that I have watched in the format of [MOVIE_NAME (YEAR), \
             MY_RATING], where RATING=1 is the lowest and RATING=5 is the highest:\n{activities}\n\
             Please summarize my movie watch preference within 200 words."
        ),
        TemplateId::Products => format!(
            "Here is a list of {PRODUCTS_DOMAIN} products that I have purchased and ratings I \
             gave for each product in the format of [PRODUCT_NAME, MY_RATING], where MY_RATING=1 \
             is the lowest and MY_RATING=5 is the highest:\n{activities}\nPlease summarize my \
             interest about {PRODUCTS_DOMAIN} within 200 words."
        ),
        TemplateId::Places => format!(
            "Here is a list of places that I have visited in {PLACES_STATE} state and ratings I \
             gave for each place in the format of [PLACE_NAME, CITY_NAME, MY_RATING], where \
             MY_RATING=1 is the lowest and MY_RATING=5 is the highest:\n{activities}\nPlease \
             summarize my location history pattern and place visit preference within 200 words."
        ),
    }
}

/// Re-renders an example's context window with the chosen template.
pub fn render_context(example: &TrainingExample, template: TemplateId) -> String {
    render_records(&example.context_records, template)
}

/// Builds one example per eligible log and counts the logs skipped for
/// being too short. Test needs `len >= n+1`; train needs `len >= n+2`
/// because the final record is reserved for the test target.
pub fn build_examples(
    logs: &[UserLog],
    n: usize,
    split: Split,
    seed: u64,
    template: TemplateId,
) -> Result<(Vec<TrainingExample>, usize), CorpusError> {
    if n == 0 {
        return Err(CorpusError::InvalidConfig("context window n must be positive".into()));
    }
    let mut examples = Vec::new();
    let mut skipped = 0usize;
    for (li, log) in logs.iter().enumerate() {
        let len = log.activities.len();
        let target_idx = match split {
            Split::Test if len >= n + 1 => len - 1,
            Split::Train if len >= n + 2 => {
                let mut rng = substream(seed, &[stream::EXAMPLE_TARGET, li as u64]);
                rng.gen_range(n..=len - 2)
            }
            _ => {
                skipped += 1;
                continue;
            }
        };
        let context_records = log.activities[target_idx - n..target_idx].to_vec();
        let rendered_context = render_records(&context_records, template);
        examples.push(TrainingExample {
            user_id: log.user_id.clone(),
            context_records,
            rendered_context,
            target: log.activities[target_idx].clone(),
            split,
        });
    }
    Ok((examples, skipped))
}

/// Distinct item names across all logs, in first-occurrence order. Used
/// as the negative-sampling catalog when no explicit catalog exists.
pub fn catalog_from_logs(logs: &[UserLog]) -> Vec<String> {
    let mut seen = std::collections::BTreeSet::new();
    let mut names = Vec::new();
    for log in logs {
        for act in &log.activities {
            if seen.insert(act.name.clone()) {
                names.push(act.name.clone());
            }
        }
    }
    names
}

/// Draws `k` distinct negatives uniformly without replacement from the
/// catalog, excluding the target (and any duplicate catalog rows).
pub fn sample_negatives_with(
    catalog: &[String],
    target_name: &str,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<String>, CorpusError> {
    let mut pool: Vec<&String> = Vec::with_capacity(catalog.len());
    let mut seen = std::collections::BTreeSet::new();
    for name in catalog {
        if name != target_name && seen.insert(name.as_str()) {
            pool.push(name);
        }
    }
    if pool.len() < k {
        return Err(CorpusError::InvalidConfig(format!(
            "catalog has {} items distinct from the target, need {k}",
            pool.len()
        )));
    }
    // Partial Fisher-Yates: the first k swapped slots are the draw.
    for i in 0..k {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    Ok(pool[..k].iter().map(|s| s.to_string()).collect())
}

/// Seeded wrapper over [`sample_negatives_with`].
pub fn sample_negatives(
    catalog: &[String],
    target_name: &str,
    k: usize,
    seed: u64,
) -> Result<Vec<String>, CorpusError> {
    sample_negatives_with(catalog, target_name, k, &mut substream(seed, &[stream::NEGATIVES]))
}

/// Places the target among three negatives at a uniformly random slot.
pub fn build_mcq_with(
    target_name: &str,
    negatives: &[String],
    rng: &mut ChaCha8Rng,
) -> Result<MultipleChoiceQuestion, CorpusError> {
    if negatives.len() != 3 {
        return Err(CorpusError::InvalidConfig(format!(
            "expected 3 negatives, got {}",
            negatives.len()
        )));
    }
    let mut distinct = std::collections::BTreeSet::new();
    distinct.insert(target_name);
    for negative in negatives {
        if !distinct.insert(negative.as_str()) {
            return Err(CorpusError::DuplicateChoice);
        }
    }
    let truth_index = rng.gen_range(0..4);
    let mut choices: Vec<String> = negatives.to_vec();
    choices.insert(truth_index, target_name.to_string());
    let choices: [String; 4] = choices.try_into().expect("exactly four choices");
    Ok(MultipleChoiceQuestion { choices, truth_index })
}

/// Seeded wrapper over [`build_mcq_with`].
pub fn build_mcq(
    target_name: &str,
    negatives: &[String],
    seed: u64,
) -> Result<MultipleChoiceQuestion, CorpusError> {
    build_mcq_with(target_name, negatives, &mut substream(seed, &[stream::MCQ_SLOT]))
}
