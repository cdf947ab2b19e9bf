//! Flat `key = value` run configuration shared by every subcommand.
//!
//! A config file is plain text: one assignment per line, `#` starts a
//! comment, blank lines are ignored. Keys apply in file order, so a
//! `preset` line should come first; it resets every key to the named
//! bundle and later lines then override individual values. Every key,
//! its default, and a short description live in [`KEYS`], which also
//! drives the `--help` listing, so the table cannot drift from the
//! parser.

use rlpf_core::corpus::{SynthConfig, TemplateId};
use rlpf_core::evalharness::{BaselineKind, BaselineSpec, TaskKind};
use rlpf_core::judge::EndpointConfig;
use rlpf_core::trainer::TrainerConfig;
use std::fmt::Display;
use std::str::FromStr;
use std::time::Duration;

/// Which frozen predictor scores summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorChoice {
    /// Local lexical judge; deterministic, no network.
    Overlap,
    /// HTTP completion endpoint.
    Remote,
}

impl PredictorChoice {
    pub fn name(self) -> &'static str {
        match self {
            PredictorChoice::Overlap => "overlap",
            PredictorChoice::Remote => "remote",
        }
    }
}

/// Everything a run needs: corpus generation, training, the scoring
/// endpoint, and the evaluation task list.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub predictor: PredictorChoice,
    pub synth: SynthConfig,
    pub trainer: TrainerConfig,
    pub endpoint: EndpointConfig,
    pub tasks: Vec<TaskKind>,
    pub topk_k: usize,
    pub topk_attribute: String,
    /// Baselines evaluated alongside a checkpoint in the same report.
    pub baselines: Vec<BaselineSpec>,
    /// Cap on test examples per evaluation task; 0 means all.
    pub max_eval_examples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            predictor: PredictorChoice::Overlap,
            synth: SynthConfig::default(),
            trainer: TrainerConfig::default(),
            endpoint: EndpointConfig::default(),
            tasks: vec![TaskKind::McqFutureActivity, TaskKind::McqRating, TaskKind::TopkAttribute],
            topk_k: 3,
            topk_attribute: "genre".to_string(),
            baselines: Vec::new(),
            max_eval_examples: 0,
        }
    }
}

/// One config key: name, default (as written in a file), description.
pub struct KeyDoc {
    pub key: &'static str,
    pub default: &'static str,
    pub doc: &'static str,
}

/// The full key table. Order here is the order `--help` prints.
pub const KEYS: &[KeyDoc] = &[
    KeyDoc {
        key: "preset",
        default: "desk",
        doc: "named bundle applied immediately, resetting all keys: desk (small synthetic \
              corpus, overlap predictor) or paper (batch 64, learning rate 1e-6, 15000 steps, \
              reward cap 1e-4 / slope 3e-3 / target length 268, remote predictor); put it first",
    },
    KeyDoc {
        key: "seed",
        default: "17",
        doc: "master seed for both corpus generation and training",
    },
    KeyDoc { key: "template", default: "movies", doc: "context domain: movies, products, places" },
    KeyDoc {
        key: "predictor",
        default: "overlap",
        doc: "overlap (local lexical judge) or remote (HTTP endpoint)",
    },
    KeyDoc { key: "synth.num_users", default: "500", doc: "synthetic users to generate" },
    KeyDoc { key: "synth.num_genres", default: "8", doc: "latent genres in the catalog" },
    KeyDoc { key: "synth.catalog_size", default: "96", doc: "distinct items in the catalog" },
    KeyDoc { key: "synth.activities_per_user", default: "60", doc: "history length per user" },
    KeyDoc {
        key: "synth.dirichlet_alpha",
        default: "0.05",
        doc: "genre-preference concentration; smaller = more genre-loyal users",
    },
    KeyDoc { key: "trainer.batch_size", default: "32", doc: "episodes per step (paper: 64)" },
    KeyDoc {
        key: "trainer.learning_rate",
        default: "0.05",
        doc: "policy step size (paper: 1e-6)",
    },
    KeyDoc {
        key: "trainer.value_learning_rate",
        default: "0.005",
        doc: "value-baseline step size",
    },
    KeyDoc { key: "trainer.steps", default: "3000", doc: "optimization steps (paper: 15000)" },
    KeyDoc {
        key: "trainer.warmup_steps",
        default: "300",
        doc: "value-only steps before any policy update",
    },
    KeyDoc {
        key: "trainer.alpha",
        default: "0.01",
        doc: "KL-anchor weight in [0, 1); 0 disables the anchor",
    },
    KeyDoc {
        key: "trainer.policy_temperature",
        default: "1.1",
        doc: "rollout sampling temperature",
    },
    KeyDoc {
        key: "trainer.eval_every",
        default: "250",
        doc: "greedy test evaluation + checkpoint cadence in steps",
    },
    KeyDoc {
        key: "trainer.context_len",
        default: "16",
        doc: "activities per rendered context window",
    },
    KeyDoc { key: "trainer.vocab_size", default: "256", doc: "policy vocabulary size" },
    KeyDoc { key: "trainer.hidden_width", default: "32", doc: "policy hidden width" },
    KeyDoc {
        key: "trainer.max_summary_len",
        default: "24",
        doc: "decoder token budget per summary",
    },
    KeyDoc {
        key: "trainer.concurrency",
        default: "1",
        doc: "parallel predictor calls while scoring a batch",
    },
    KeyDoc { key: "reward.w", default: "1", doc: "weight of the length term; 0 disables it" },
    KeyDoc { key: "reward.cap_c", default: "0.01", doc: "length-bonus cap (paper: 1e-4)" },
    KeyDoc { key: "reward.beta", default: "0.05", doc: "length-penalty slope (paper: 3e-3)" },
    KeyDoc {
        key: "reward.target_len",
        default: "12",
        doc: "target summary length in tokens (paper: 268)",
    },
    KeyDoc {
        key: "endpoint.base_url",
        default: "http://127.0.0.1:8080/complete",
        doc: "completion endpoint; env RLPF_ENDPOINT overrides this",
    },
    KeyDoc { key: "endpoint.temperature", default: "0.1", doc: "completion temperature" },
    KeyDoc { key: "endpoint.max_tokens", default: "16", doc: "completion token budget" },
    KeyDoc { key: "endpoint.timeout_ms", default: "10000", doc: "per-request timeout" },
    KeyDoc {
        key: "endpoint.max_retries",
        default: "3",
        doc: "transport retries; unparseable answers are never retried",
    },
    KeyDoc { key: "endpoint.concurrency", default: "4", doc: "parallel endpoint requests" },
    KeyDoc {
        key: "endpoint.bearer_token",
        default: "",
        doc: "optional Authorization bearer; empty means none",
    },
    KeyDoc {
        key: "eval.tasks",
        default: "mcq_future_activity,mcq_rating,topk_attribute",
        doc: "comma list of tasks; review_generation needs reference texts and an endpoint",
    },
    KeyDoc { key: "eval.topk_k", default: "3", doc: "k for the top-k attribute task" },
    KeyDoc {
        key: "eval.topk_attribute",
        default: "genre",
        doc: "attribute the top-k task recalls (genre, category, city, ...)",
    },
    KeyDoc {
        key: "eval.baselines",
        default: "",
        doc: "comma list of first_X / random_X / last_X / all_n also evaluated next to a \
              checkpoint",
    },
    KeyDoc {
        key: "eval.max_examples",
        default: "0",
        doc: "cap on test examples per task; 0 means all",
    },
];

fn parse_num<T>(key: &str, value: &str) -> Result<T, String>
where
    T: FromStr,
    T::Err: Display,
{
    value.parse().map_err(|e| format!("key {key}: cannot parse {value:?}: {e}"))
}

fn parse_template(value: &str) -> Result<TemplateId, String> {
    match value {
        "movies" => Ok(TemplateId::Movies),
        "products" => Ok(TemplateId::Products),
        "places" => Ok(TemplateId::Places),
        _ => Err(format!("unknown template {value:?} (expected movies, products, or places)")),
    }
}

/// Parses one baseline label of the shape `first_X`, `random_X`,
/// `last_X`, or `all_n`. Inverse of [`BaselineSpec::label`].
pub fn parse_baseline(label: &str) -> Result<BaselineSpec, String> {
    if label == "all_n" {
        return Ok(BaselineSpec { kind: BaselineKind::AllN, x: 0 });
    }
    let err = || {
        format!("bad baseline {label:?} (expected first_X, random_X, last_X, or all_n)")
    };
    let (kind, x) = label.rsplit_once('_').ok_or_else(err)?;
    let kind = BaselineKind::parse(&format!("{kind}_x")).ok_or_else(err)?;
    let x: usize = x.parse().map_err(|_| err())?;
    if x == 0 {
        return Err(format!("bad baseline {label:?}: X must be at least 1"));
    }
    Ok(BaselineSpec { kind, x })
}

fn parse_task_list(value: &str) -> Result<Vec<TaskKind>, String> {
    let mut tasks = Vec::new();
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let task = TaskKind::parse(part).ok_or_else(|| {
            format!(
                "unknown task {part:?} (expected mcq_future_activity, mcq_rating, \
                 topk_attribute, or review_generation)"
            )
        })?;
        if !tasks.contains(&task) {
            tasks.push(task);
        }
    }
    Ok(tasks)
}

fn parse_baseline_list(value: &str) -> Result<Vec<BaselineSpec>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(parse_baseline)
        .collect()
}

impl RunConfig {
    fn apply_preset(&mut self, name: &str) -> Result<(), String> {
        match name {
            "desk" => {
                *self = RunConfig::default();
                Ok(())
            }
            "paper" => {
                *self = RunConfig::default();
                self.trainer = TrainerConfig::full_scale();
                self.predictor = PredictorChoice::Remote;
                Ok(())
            }
            _ => Err(format!("unknown preset {name:?} (expected desk or paper)")),
        }
    }

    /// Applies one `key = value` assignment. Key names are exactly the
    /// entries of [`KEYS`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "preset" => self.apply_preset(value)?,
            "seed" => {
                let seed = parse_num(key, value)?;
                self.synth.seed = seed;
                self.trainer.seed = seed;
            }
            "template" => self.trainer.template = parse_template(value)?,
            "predictor" => {
                self.predictor = match value {
                    "overlap" => PredictorChoice::Overlap,
                    "remote" => PredictorChoice::Remote,
                    _ => {
                        return Err(format!(
                            "unknown predictor {value:?} (expected overlap or remote)"
                        ))
                    }
                }
            }
            "synth.num_users" => self.synth.num_users = parse_num(key, value)?,
            "synth.num_genres" => self.synth.num_genres = parse_num(key, value)?,
            "synth.catalog_size" => self.synth.catalog_size = parse_num(key, value)?,
            "synth.activities_per_user" => {
                self.synth.activities_per_user = parse_num(key, value)?
            }
            "synth.dirichlet_alpha" => self.synth.dirichlet_alpha = parse_num(key, value)?,
            "trainer.batch_size" => self.trainer.batch_size = parse_num(key, value)?,
            "trainer.learning_rate" => self.trainer.learning_rate = parse_num(key, value)?,
            "trainer.value_learning_rate" => {
                self.trainer.value_learning_rate = parse_num(key, value)?
            }
            "trainer.steps" => self.trainer.steps = parse_num(key, value)?,
            "trainer.warmup_steps" => self.trainer.warmup_steps = parse_num(key, value)?,
            "trainer.alpha" => self.trainer.alpha = parse_num(key, value)?,
            "trainer.policy_temperature" => {
                self.trainer.policy_temperature = parse_num(key, value)?
            }
            "trainer.eval_every" => self.trainer.eval_every = parse_num(key, value)?,
            "trainer.context_len" => self.trainer.context_len = parse_num(key, value)?,
            "trainer.vocab_size" => self.trainer.vocab_size = parse_num(key, value)?,
            "trainer.hidden_width" => self.trainer.hidden_width = parse_num(key, value)?,
            "trainer.max_summary_len" => {
                self.trainer.max_summary_len = parse_num(key, value)?
            }
            "trainer.concurrency" => self.trainer.concurrency = parse_num(key, value)?,
            "reward.w" => self.trainer.reward.w = parse_num(key, value)?,
            "reward.cap_c" => self.trainer.reward.cap_c = parse_num(key, value)?,
            "reward.beta" => self.trainer.reward.beta = parse_num(key, value)?,
            "reward.target_len" => self.trainer.reward.target_len = parse_num(key, value)?,
            "endpoint.base_url" => self.endpoint.base_url = value.to_string(),
            "endpoint.temperature" => self.endpoint.temperature = parse_num(key, value)?,
            "endpoint.max_tokens" => self.endpoint.max_tokens = parse_num(key, value)?,
            "endpoint.timeout_ms" => {
                self.endpoint.timeout = Duration::from_millis(parse_num(key, value)?)
            }
            "endpoint.max_retries" => self.endpoint.max_retries = parse_num(key, value)?,
            "endpoint.concurrency" => self.endpoint.concurrency = parse_num(key, value)?,
            "endpoint.bearer_token" => {
                self.endpoint.bearer_token =
                    if value.is_empty() { None } else { Some(value.to_string()) }
            }
            "eval.tasks" => self.tasks = parse_task_list(value)?,
            "eval.topk_k" => self.topk_k = parse_num(key, value)?,
            "eval.topk_attribute" => self.topk_attribute = value.to_string(),
            "eval.baselines" => self.baselines = parse_baseline_list(value)?,
            "eval.max_examples" => self.max_eval_examples = parse_num(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }
}

/// Parses a whole config file. Errors carry the 1-based line number.
pub fn parse_config(text: &str) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value, got {raw:?}", idx + 1))?;
        cfg.set(key.trim(), value.trim()).map_err(|e| format!("line {}: {e}", idx + 1))?;
    }
    Ok(cfg)
}
