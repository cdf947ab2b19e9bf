//! Truncated-context baselines: feed the predictor a subset of the raw
//! activity lines instead of a learned summary, rendered through the
//! same template so prompt shape is held constant across variants.

use crate::corpus::{render_records, ActivityRecord, TemplateId, TrainingExample};
use crate::rng::{stream, substream};
use rand::Rng;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    FirstX,
    RandomX,
    LastX,
    AllN,
}

impl BaselineKind {
    pub fn parse(s: &str) -> Option<BaselineKind> {
        match s {
            "first_x" => Some(BaselineKind::FirstX),
            "random_x" => Some(BaselineKind::RandomX),
            "last_x" => Some(BaselineKind::LastX),
            "all_n" => Some(BaselineKind::AllN),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::FirstX => "first_x",
            BaselineKind::RandomX => "random_x",
            BaselineKind::LastX => "last_x",
            BaselineKind::AllN => "all_n",
        }
    }
}

/// Which slice of the context to keep. `x` is ignored by `AllN`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    pub x: usize,
}

impl BaselineSpec {
    pub fn label(&self) -> String {
        match self.kind {
            BaselineKind::AllN => "all_n".to_string(),
            kind => format!("{}_{}", kind.name().trim_end_matches("_x"), self.x),
        }
    }
}

/// Uniform x-subset of 0..n in ascending order, so the selected
/// records keep their chronology. Partial Fisher-Yates over indices.
fn random_subset(n: usize, x: usize, seed: u64) -> Vec<usize> {
    let mut rng = substream(seed, &[stream::BASELINE_RANDOM]);
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..x {
        let j = rng.gen_range(i..n);
        indices.swap(i, j);
    }
    indices.truncate(x);
    indices.sort_unstable();
    indices
}

/// Renders the subset of `example`'s context selected by `spec` with
/// the same template used for full contexts.
pub fn build_baseline_context(
    example: &TrainingExample,
    spec: BaselineSpec,
    template: TemplateId,
    seed: u64,
) -> Result<String, EvalError> {
    let records = &example.context_records;
    let n = records.len();
    if spec.kind != BaselineKind::AllN && spec.x > n {
        return Err(EvalError::InvalidX { x: spec.x, available: n });
    }
    let selected: Vec<ActivityRecord> = match spec.kind {
        BaselineKind::AllN => records.clone(),
        BaselineKind::FirstX => records[..spec.x].to_vec(),
        BaselineKind::LastX => records[n - spec.x..].to_vec(),
        BaselineKind::RandomX => {
            random_subset(n, spec.x, seed).into_iter().map(|i| records[i].clone()).collect()
        }
    };
    Ok(render_records(&selected, template))
}
