//! Command-line front end: corpus synthesis and ingestion, training,
//! downstream evaluation, report comparison, and pairwise auto-rating.
//!
//! All subcommands share the flat config format in [`config`]. Exit
//! codes are stable: 0 success, 1 usage or config mistakes, 2 data or
//! model problems, 3 unreachable scoring endpoint.

pub mod config;

use std::collections::BTreeMap;
use std::path::Path;

use rlpf_core::corpus::{
    ingest_jsonl, modal_attribute, synth_generate, top_attributes, write_catalog, write_jsonl,
    CorpusError, MultipleChoiceQuestion, UserLog,
};
use rlpf_core::evalharness::{
    aggregate_win_rates, auto_rate_pair, build_baseline_context, compare_reports, rating_grid,
    run_mcq_task, run_topk_task, BaselineSpec, EvalError, EvalReport, Metric, TaskKind,
    TaskResult, TaskSpec,
};
use rlpf_core::judge::{
    HttpCompleter, JudgeError, OverlapPredictor, Predictor, RemotePredictor,
};
use rlpf_core::rng::{stream, substream};
use rlpf_core::textmodel::{greedy_summary, load_checkpoint, ModelError};
use rlpf_core::trainer::{prepare_training_data, run_training, Episode, TrainError};

use config::{parse_baseline, PredictorChoice, RunConfig, KEYS};

/// One failure, carrying the process exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unknown keys, malformed config: exit 1.
    Usage(String),
    /// Unreadable or inconsistent data, corpus, or checkpoint: exit 2.
    Data(String),
    /// Scoring endpoint unreachable after retries: exit 3.
    Endpoint(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Endpoint(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Endpoint(m) => m,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<JudgeError> for CliError {
    fn from(e: JudgeError) -> Self {
        CliError::Endpoint(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Judge(j) => CliError::Endpoint(j.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Judge(j) => CliError::Endpoint(j.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Runs one invocation and returns the process exit code. Kept in the
/// library so tests can drive the binary in-process.
pub fn run_command<I: IntoIterator<Item = String>>(argv: I) -> i32 {
    let args: Vec<String> = argv.into_iter().collect();
    match dispatch(&args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(args: &[String]) -> Result<(), CliError> {
    let Some(first) = args.first() else {
        return Err(CliError::Usage("missing subcommand; try rlpf --help".to_string()));
    };
    if first == "help" || args.iter().any(|a| a == "--help" || a == "-h") {
        print!("{}", help_text());
        return Ok(());
    }
    let rest = &args[1..];
    match first.as_str() {
        "synth" => cmd_synth(rest),
        "ingest" => cmd_ingest(rest),
        "train" => cmd_train(rest),
        "eval" => cmd_eval(rest),
        "compare" => cmd_compare(rest),
        "rate" => cmd_rate(rest),
        other => Err(CliError::Usage(format!("unknown subcommand {other:?}; try rlpf --help"))),
    }
}

/// `--name value` pairs against a fixed flag list; every flag takes a
/// value, duplicates and strays are usage errors.
fn parse_flags(
    command: &str,
    args: &[String],
    known: &[&'static str],
    required: &[&'static str],
) -> Result<BTreeMap<&'static str, String>, CliError> {
    let mut flags = BTreeMap::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let name = arg.strip_prefix("--").ok_or_else(|| {
            CliError::Usage(format!("{command}: expected a --flag, got {arg:?}"))
        })?;
        let known_name = known.iter().find(|k| **k == name).ok_or_else(|| {
            CliError::Usage(format!("{command}: unknown flag --{name}; try rlpf --help"))
        })?;
        let value = it.next().ok_or_else(|| {
            CliError::Usage(format!("{command}: --{name} needs a value"))
        })?;
        if flags.insert(*known_name, value.clone()).is_some() {
            return Err(CliError::Usage(format!("{command}: --{name} given twice")));
        }
    }
    for name in required {
        if !flags.contains_key(name) {
            return Err(CliError::Usage(format!("{command}: --{name} is required")));
        }
    }
    Ok(flags)
}

/// Loads `--config` (or defaults), applies the RLPF_ENDPOINT override,
/// and validates.
fn load_config(flags: &BTreeMap<&'static str, String>) -> Result<RunConfig, CliError> {
    let mut cfg = match flags.get("config") {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("cannot read config {path}: {e}")))?;
            config::parse_config(&text)
                .map_err(|e| CliError::Usage(format!("config {path}: {e}")))?
        }
        None => RunConfig::default(),
    };
    if let Ok(url) = std::env::var("RLPF_ENDPOINT") {
        if !url.is_empty() {
            cfg.endpoint.base_url = url;
        }
    }
    cfg.trainer.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn build_predictor(cfg: &RunConfig, logs: &[UserLog]) -> Box<dyn Predictor> {
    match cfg.predictor {
        PredictorChoice::Overlap => Box::new(OverlapPredictor::from_logs(logs)),
        PredictorChoice::Remote => {
            Box::new(RemotePredictor::http(cfg.endpoint.clone(), cfg.trainer.template))
        }
    }
}

fn count_activities(logs: &[UserLog]) -> usize {
    logs.iter().map(|l| l.activities.len()).sum()
}

fn cmd_synth(args: &[String]) -> Result<(), CliError> {
    let flags = parse_flags("synth", args, &["config", "out", "catalog"], &["out"])?;
    let cfg = load_config(&flags)?;
    let (logs, catalog) = synth_generate(&cfg.synth)?;
    write_jsonl(Path::new(&flags["out"]), &logs)?;
    if let Some(path) = flags.get("catalog") {
        write_catalog(Path::new(path), &catalog)?;
    }
    println!(
        "wrote {} users ({} activities, {} catalog items) to {}",
        logs.len(),
        count_activities(&logs),
        catalog.len(),
        flags["out"]
    );
    Ok(())
}

fn cmd_ingest(args: &[String]) -> Result<(), CliError> {
    let flags = parse_flags("ingest", args, &["input", "out"], &["input", "out"])?;
    let logs = ingest_jsonl(Path::new(&flags["input"]))?;
    write_jsonl(Path::new(&flags["out"]), &logs)?;
    println!(
        "ingested {} users ({} activities) into {}",
        logs.len(),
        count_activities(&logs),
        flags["out"]
    );
    Ok(())
}

fn cmd_train(args: &[String]) -> Result<(), CliError> {
    let flags =
        parse_flags("train", args, &["config", "corpus", "out-dir"], &["corpus", "out-dir"])?;
    let cfg = load_config(&flags)?;
    let logs = ingest_jsonl(Path::new(&flags["corpus"]))?;
    let data = prepare_training_data(&logs, &cfg.trainer)?;
    let predictor = build_predictor(&cfg, &logs);
    let artifacts =
        run_training(&data, predictor.as_ref(), &cfg.trainer, Some(Path::new(&flags["out-dir"])))?;
    let last = artifacts.rows.last().expect("a run always logs its probe row");
    match last.eval_accuracy {
        Some(acc) => println!(
            "finished {} steps: mean reward {:.4}, eval accuracy {:.4}",
            last.step, last.mean_reward, acc
        ),
        None => println!("finished {} steps: mean reward {:.4}", last.step, last.mean_reward),
    }
    Ok(())
}

/// Greedy summaries from a checkpoint for every episode, after checking
/// the checkpoint was trained against this corpus's vocabulary.
fn checkpoint_inputs(
    path: &str,
    data: &rlpf_core::trainer::TrainingData,
    episodes: &[&Episode],
    max_len: usize,
) -> Result<Vec<String>, CliError> {
    let (state, header) = load_checkpoint(Path::new(path))?;
    let expect = format!("{:016x}", data.vocab.hash());
    if header.vocab_hash != expect {
        return Err(CliError::Data(format!(
            "checkpoint {path} was trained against a different vocabulary \
             (hash {}, corpus gives {expect}); rebuild it from this corpus",
            header.vocab_hash
        )));
    }
    episodes
        .iter()
        .map(|ep| Ok(greedy_summary(&state.policy, &data.vocab, &ep.features, max_len)?.text))
        .collect()
}

/// Raw-context inputs for one truncation baseline. Each example gets
/// its own seed so random subsets differ across examples.
fn baseline_inputs(
    spec: &BaselineSpec,
    episodes: &[&Episode],
    cfg: &RunConfig,
) -> Result<Vec<String>, CliError> {
    episodes
        .iter()
        .enumerate()
        .map(|(i, ep)| {
            Ok(build_baseline_context(
                &ep.example,
                *spec,
                cfg.trainer.template,
                cfg.trainer.seed.wrapping_add(i as u64),
            )?)
        })
        .collect()
}

/// Runs every configured task for one input variant, appending to
/// `results`. Tasks that need per-example data some episodes lack
/// (ratings, attribute labels) score the subset that has it; the subset
/// depends only on the episodes, so it is identical across variants and
/// reports stay pairable.
fn run_tasks_for_variant(
    cfg: &RunConfig,
    variant: &str,
    inputs: &[String],
    episodes: &[&Episode],
    logs: &[UserLog],
    predictor: &dyn Predictor,
    results: &mut Vec<TaskResult>,
) -> Result<(), CliError> {
    let concurrency = match cfg.predictor {
        PredictorChoice::Overlap => 1,
        PredictorChoice::Remote => cfg.endpoint.concurrency,
    };
    for &task in &cfg.tasks {
        match task {
            TaskKind::McqFutureActivity => {
                let mcqs: Vec<MultipleChoiceQuestion> =
                    episodes.iter().map(|ep| ep.mcq.clone()).collect();
                let run = run_mcq_task(inputs, &mcqs, predictor, concurrency)?;
                if run.unparseable > 0 {
                    eprintln!(
                        "note: {} of {} answers were unparseable and scored 0",
                        run.unparseable,
                        mcqs.len()
                    );
                }
                results.push(TaskResult::new(
                    task.name(),
                    variant,
                    Metric::Accuracy,
                    run.per_example,
                ));
            }
            TaskKind::McqRating => {
                let grid = rating_grid(cfg.trainer.template);
                let mut subset = Vec::new();
                let mut mcqs = Vec::new();
                for (i, ep) in episodes.iter().enumerate() {
                    let Some(rating) = ep.example.target.rating else { continue };
                    if !grid.contains(&rating) {
                        continue;
                    }
                    let mut rng =
                        substream(cfg.trainer.seed, &[stream::MCQ_SLOT, 2, i as u64]);
                    mcqs.push(rlpf_core::evalharness::build_rating_mcq(
                        rating,
                        cfg.trainer.template,
                        &mut rng,
                    )?);
                    subset.push(inputs[i].clone());
                }
                if mcqs.is_empty() {
                    eprintln!("note: skipping mcq_rating, no target has an on-grid rating");
                    continue;
                }
                let run = run_mcq_task(&subset, &mcqs, predictor, concurrency)?;
                results.push(TaskResult::new(
                    task.name(),
                    variant,
                    Metric::Accuracy,
                    run.per_example,
                ));
            }
            TaskKind::TopkAttribute => {
                let by_user: BTreeMap<&str, &UserLog> =
                    logs.iter().map(|l| (l.user_id.as_str(), l)).collect();
                let attr = cfg.topk_attribute.as_str();
                let global = global_attribute_values(logs, attr);
                let mut subset = Vec::new();
                let mut labels = Vec::new();
                let mut vocabularies = Vec::new();
                for (i, ep) in episodes.iter().enumerate() {
                    let Some(log) = by_user.get(ep.example.user_id.as_str()) else { continue };
                    let Some(label) = modal_attribute(log, attr) else { continue };
                    let mut vocabulary = top_attributes(log, attr, 10);
                    for value in &global {
                        if vocabulary.len() >= cfg.topk_k {
                            break;
                        }
                        if !vocabulary.contains(value) {
                            vocabulary.push(value.clone());
                        }
                    }
                    if vocabulary.len() < cfg.topk_k {
                        return Err(CliError::Data(format!(
                            "attribute {attr:?} has only {} distinct values, top-{} needs \
                             at least that many candidates",
                            global.len(),
                            cfg.topk_k
                        )));
                    }
                    subset.push(inputs[i].clone());
                    labels.push(label);
                    vocabularies.push(vocabulary);
                }
                if subset.is_empty() {
                    eprintln!("note: skipping topk_attribute, no user carries {attr:?}");
                    continue;
                }
                let run = run_topk_task(&subset, &labels, &vocabularies, cfg.topk_k)?;
                let spec = TaskSpec {
                    kind: task,
                    k: cfg.topk_k,
                    attribute: attr.to_string(),
                    metric: Metric::RecallAtK,
                };
                results.push(TaskResult::new(
                    spec.label(),
                    variant,
                    Metric::RecallAtK,
                    run.per_example,
                ));
            }
            TaskKind::ReviewGeneration => {
                eprintln!(
                    "note: skipping review_generation, it needs reference texts and an \
                     endpoint-backed generator"
                );
            }
        }
    }
    Ok(())
}

fn global_attribute_values(logs: &[UserLog], attr: &str) -> Vec<String> {
    let mut values = std::collections::BTreeSet::new();
    for log in logs {
        for act in &log.activities {
            if let Some(vs) = act.attributes.get(attr) {
                values.extend(vs.iter().cloned());
            }
        }
    }
    values.into_iter().collect()
}

fn cmd_eval(args: &[String]) -> Result<(), CliError> {
    let flags = parse_flags(
        "eval",
        args,
        &["config", "corpus", "checkpoint", "baseline", "out", "csv"],
        &["corpus", "out"],
    )?;
    let cfg = load_config(&flags)?;
    let checkpoint = flags.get("checkpoint");
    let baseline = flags.get("baseline");
    if checkpoint.is_some() == baseline.is_some() {
        return Err(CliError::Usage(
            "eval: give exactly one of --checkpoint or --baseline".to_string(),
        ));
    }

    let logs = ingest_jsonl(Path::new(&flags["corpus"]))?;
    let data = prepare_training_data(&logs, &cfg.trainer)?;
    let mut episodes: Vec<&Episode> = data.test.iter().collect();
    if cfg.max_eval_examples > 0 {
        episodes.truncate(cfg.max_eval_examples);
    }
    if episodes.is_empty() {
        return Err(CliError::Data(
            "corpus yields no test examples; every user needs at least context_len + 2 \
             activities"
                .to_string(),
        ));
    }
    let predictor = build_predictor(&cfg, &logs);

    // (variant name, inputs) pairs, policy first when present.
    let mut variants: Vec<(String, Vec<String>)> = Vec::new();
    if let Some(path) = checkpoint {
        let inputs = checkpoint_inputs(path, &data, &episodes, cfg.trainer.max_summary_len)?;
        variants.push(("policy".to_string(), inputs));
        for spec in &cfg.baselines {
            variants.push((spec.label(), baseline_inputs(spec, &episodes, &cfg)?));
        }
    }
    if let Some(label) = baseline {
        let spec = parse_baseline(label).map_err(CliError::Usage)?;
        variants.push((spec.label(), baseline_inputs(&spec, &episodes, &cfg)?));
    }

    let mut results = Vec::new();
    for (variant, inputs) in &variants {
        run_tasks_for_variant(
            &cfg,
            variant,
            inputs,
            &episodes,
            &logs,
            predictor.as_ref(),
            &mut results,
        )?;
    }

    // With a checkpoint plus configured baselines, attach paired tests
    // of the policy against each baseline.
    let mut comparisons = Vec::new();
    if checkpoint.is_some() && !cfg.baselines.is_empty() {
        let policy_only = EvalReport {
            results: results.iter().filter(|r| r.input_variant == "policy").cloned().collect(),
            win_rates: Vec::new(),
            comparisons: Vec::new(),
        };
        for spec in &cfg.baselines {
            let label = spec.label();
            let baseline_only = EvalReport {
                results: results.iter().filter(|r| r.input_variant == label).cloned().collect(),
                win_rates: Vec::new(),
                comparisons: Vec::new(),
            };
            comparisons.extend(compare_reports(&policy_only, &baseline_only)?);
        }
    }

    let report = EvalReport { results, win_rates: Vec::new(), comparisons };
    report.validate()?;
    std::fs::write(&flags["out"], report.to_json())?;
    if let Some(path) = flags.get("csv") {
        std::fs::write(path, report.results_csv())?;
    }
    for r in &report.results {
        println!(
            "{} [{}] {} = {:.4} over {} examples",
            r.task,
            r.input_variant,
            r.metric.name(),
            r.value,
            r.examples
        );
    }
    for c in &report.comparisons {
        println!(
            "{}: {} {:.4} vs {} {:.4} (delta {:+.4}, p = {:.4})",
            c.task, c.variant_a, c.value_a, c.variant_b, c.value_b, c.delta, c.p_value
        );
    }
    Ok(())
}

fn cmd_compare(args: &[String]) -> Result<(), CliError> {
    let flags = parse_flags("compare", args, &["a", "b", "out"], &["a", "b"])?;
    let read = |path: &String| -> Result<EvalReport, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read report {path}: {e}")))?;
        let report = EvalReport::from_json(&text)
            .map_err(|e| CliError::Data(format!("report {path}: {e}")))?;
        report.validate().map_err(|e| CliError::Data(format!("report {path}: {e}")))?;
        Ok(report)
    };
    let a = read(&flags["a"])?;
    let b = read(&flags["b"])?;
    let comparisons = compare_reports(&a, &b)?;
    let report = EvalReport { results: Vec::new(), win_rates: Vec::new(), comparisons };
    let csv = report.comparisons_csv();
    if let Some(path) = flags.get("out") {
        std::fs::write(path, &csv)?;
    }
    print!("{csv}");
    Ok(())
}

/// One JSON string per line; blank lines are skipped.
fn read_strings_jsonl(path: &str) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {path}: {e}")))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s: String = serde_json::from_str(line).map_err(|e| {
            CliError::Data(format!("{path} line {}: expected a JSON string: {e}", idx + 1))
        })?;
        out.push(s);
    }
    Ok(out)
}

fn cmd_rate(args: &[String]) -> Result<(), CliError> {
    let flags = parse_flags(
        "rate",
        args,
        &["config", "candidates", "references", "histories", "out"],
        &["candidates", "references", "histories", "out"],
    )?;
    let cfg = load_config(&flags)?;
    let candidates = read_strings_jsonl(&flags["candidates"])?;
    let references = read_strings_jsonl(&flags["references"])?;
    let histories = read_strings_jsonl(&flags["histories"])?;
    if candidates.len() != references.len() || candidates.len() != histories.len() {
        return Err(CliError::Data(format!(
            "aligned inputs differ in length: {} candidates, {} references, {} histories",
            candidates.len(),
            references.len(),
            histories.len()
        )));
    }
    if candidates.is_empty() {
        return Err(CliError::Data("no pairs to rate".to_string()));
    }

    let completer = HttpCompleter::new(&cfg.endpoint);
    let mut rated = Vec::with_capacity(candidates.len());
    for (i, ((candidate, reference), history)) in
        candidates.iter().zip(&references).zip(&histories).enumerate()
    {
        rated.push(auto_rate_pair(
            candidate,
            reference,
            history,
            &completer,
            &cfg.endpoint,
            cfg.trainer.seed.wrapping_add(i as u64),
        )?);
    }
    let report = EvalReport {
        results: Vec::new(),
        win_rates: aggregate_win_rates(&rated),
        comparisons: Vec::new(),
    };
    report.validate()?;
    std::fs::write(&flags["out"], report.to_json())?;
    print!("{}", report.win_rates_csv(cfg.trainer.template.name()));
    Ok(())
}

/// The full help page: usage, subcommands, exit codes, and every config
/// key with its default.
pub fn help_text() -> String {
    let mut out = String::from(
        "rlpf - train and evaluate reward-tuned user-context summarizers\n\
         \n\
         Usage: rlpf <command> [--flag value ...]\n\
         \n\
         Commands:\n\
         \x20 synth    --out <jsonl> [--catalog <jsonl>] [--config <file>]\n\
         \x20          generate a synthetic activity corpus\n\
         \x20 ingest   --input <jsonl> --out <jsonl>\n\
         \x20          validate and normalize an activity-log corpus\n\
         \x20 train    --corpus <jsonl> --out-dir <dir> [--config <file>]\n\
         \x20          train the summarizer; writes metrics.csv and checkpoints\n\
         \x20 eval     --corpus <jsonl> (--checkpoint <ckpt> | --baseline <label>)\n\
         \x20          --out <json> [--csv <file>] [--config <file>]\n\
         \x20          run the evaluation tasks on summaries or a raw-context baseline\n\
         \x20 compare  --a <report.json> --b <report.json> [--out <csv>]\n\
         \x20          paired t-tests between two evaluation reports\n\
         \x20 rate     --candidates <jsonl> --references <jsonl> --histories <jsonl>\n\
         \x20          --out <json> [--config <file>]\n\
         \x20          pairwise auto-rating of candidate vs reference summaries\n\
         \n\
         Baseline labels: first_X, random_X, last_X, all_n (X = records kept).\n\
         \n\
         Exit codes: 0 success, 1 usage or config, 2 data or model, 3 endpoint\n\
         unreachable. The RLPF_ENDPOINT environment variable overrides\n\
         endpoint.base_url.\n\
         \n\
         Config file: one `key = value` per line, `#` starts a comment. Keys:\n",
    );
    for doc in KEYS {
        out.push_str(&format!("  {:<26} {}\n", doc.key, doc.doc));
        let shown = if doc.default.is_empty() { "(empty)" } else { doc.default };
        out.push_str(&format!("  {:<26}   default: {}\n", "", shown));
    }
    out
}
