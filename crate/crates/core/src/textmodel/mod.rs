//! The from-scratch summarizer policy.
//!
//! Architecture: a linear bag-of-tokens context encoder plus a previous-
//! token embedding feed a shared output layer,
//!
//! ```text
//! h_ctx  = E^T f                       (E: V x H, f: context token counts)
//! hidden = concat(h_ctx, M[prev])      (M: V x H)
//! logits = W^T hidden + b              (W: 2H x V, b: V)
//! p      = softmax(logits / temperature)
//! ```
//!
//! so each step's distribution depends on the whole context bag and the
//! single previous token. Ids 0..2 are reserved: `<bos>` starts every
//! rollout, `<eos>` terminates one, `<unk>` absorbs out-of-vocabulary
//! tokens. Stored step log-probs are always untempered (temperature 1);
//! the temperature only shapes sampling.
//!
//! All gradients here are analytic and are checked against central finite
//! differences in the tests.

mod checkpoint;
mod grad;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader, FORMAT_VERSION};
pub use grad::{grad_episode_kl, grad_log_prob, ValueGradient};

use crate::text::tokenize;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Start-of-sequence token id; never emitted.
pub const BOS: usize = 0;
/// End-of-sequence token id; emitting it ends a rollout.
pub const EOS: usize = 1;
/// Out-of-vocabulary token id.
pub const UNK: usize = 2;
/// Number of reserved leading token ids.
pub const RESERVED: usize = 3;

/// Distribution entries are floored at this value after the softmax so
/// they stay strictly positive even when a low temperature drives the
/// rest of the mass to zero in f64.
const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite logit encountered")]
    NonFiniteLogit,
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    InvalidToken { id: usize, vocab: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint header: {0}")]
    MalformedHeader(String),
    #[error("checkpoint payload does not match its checksum")]
    ChecksumMismatch,
    #[error("checkpoint format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
}

/// FNV-1a 64-bit hash; used for vocabulary identity and checkpoint
/// payload checksums.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Token table with reserved ids 0..2. Built from corpus text by keeping
/// the most frequent tokens; ordering is deterministic (count descending,
/// then token ascending).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let tokens = Vec::<String>::deserialize(deserializer)?;
        Ok(Vocabulary::from_tokens(tokens))
    }
}

impl Vocabulary {
    /// Builds a vocabulary of at most `max_size` entries (including the
    /// three reserved ids) from the given texts.
    pub fn build<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        max_size: usize,
    ) -> Result<Vocabulary, ModelError> {
        if max_size < RESERVED + 1 {
            return Err(ModelError::InvalidConfig(format!(
                "max_size {max_size} leaves no room beyond the {RESERVED} reserved tokens"
            )));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        for text in texts {
            for token in tokenize(text) {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - RESERVED);

        let mut tokens = vec!["<bos>".to_string(), "<eos>".to_string(), "<unk>".to_string()];
        tokens.extend(ranked.into_iter().map(|(t, _)| t));
        Ok(Vocabulary::from_tokens(tokens))
    }

    /// Restores a vocabulary from its exact token list (checkpoint side
    /// file). The list must start with the three reserved tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Vocabulary {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index }
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Id for a token, `<unk>` when absent.
    pub fn id_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// Tokenizes and maps to ids, unknown tokens becoming `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|t| self.id_of(t)).collect()
    }

    /// Space-joins the non-reserved tokens of `ids`.
    pub fn decode(&self, ids: &[usize]) -> String {
        let words: Vec<&str> =
            ids.iter().filter(|&&id| id >= RESERVED).map(|&id| self.token(id)).collect();
        words.join(" ")
    }

    /// Bag-of-token counts over the full vocabulary; out-of-vocabulary
    /// tokens count into the `<unk>` slot.
    pub fn count_features(&self, text: &str) -> Vec<f64> {
        let mut features = vec![0.0; self.size()];
        for id in self.encode(text) {
            features[id] += 1.0;
        }
        features
    }

    /// Stable identity hash over the token list.
    pub fn hash(&self) -> u64 {
        fnv1a64(self.tokens.join("\n").as_bytes())
    }
}

/// Summarizer parameters. Blocks, in checkpoint order: context encoder
/// (V x H), token embedding (V x H), output weights (2H x V), biases (V).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParameters {
    pub v: usize,
    pub h: usize,
    pub context_encoder: Vec<f64>,
    pub token_embedding: Vec<f64>,
    pub output: Vec<f64>,
    pub biases: Vec<f64>,
}

impl PolicyParameters {
    pub fn zeros(v: usize, h: usize) -> PolicyParameters {
        PolicyParameters {
            v,
            h,
            context_encoder: vec![0.0; v * h],
            token_embedding: vec![0.0; v * h],
            output: vec![0.0; 2 * h * v],
            biases: vec![0.0; v],
        }
    }

    /// Small uniform random init in [-0.08, 0.08). All-zero parameters
    /// are a saddle for this architecture (only biases would ever move),
    /// so training always starts from a seeded random point. Biases stay
    /// at zero so the initial next-token distribution is near uniform;
    /// a fresh policy therefore writes long, nearly random summaries,
    /// and early training gets broad token exploration.
    pub fn init_random(v: usize, h: usize, rng: &mut impl rand::Rng) -> PolicyParameters {
        let mut params = PolicyParameters::zeros(v, h);
        for block in [&mut params.context_encoder, &mut params.token_embedding, &mut params.output]
        {
            for w in block.iter_mut() {
                *w = rng.gen_range(-0.08..0.08);
            }
        }
        params
    }

    /// Returns a frozen copy to use as a reference model.
    pub fn clone_frozen(&self) -> PolicyParameters {
        self.clone()
    }

    /// `self += scale * other`, block-wise. Panics on shape mismatch.
    pub fn add_scaled(&mut self, other: &PolicyParameters, scale: f64) {
        assert_eq!((self.v, self.h), (other.v, other.h), "parameter shape mismatch");
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.context_encoder, &self.token_embedding, &self.output, &self.biases]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [
            &mut self.context_encoder,
            &mut self.token_embedding,
            &mut self.output,
            &mut self.biases,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    fn check_features(&self, features: &[f64]) -> Result<(), ModelError> {
        if features.len() != self.v {
            return Err(ModelError::InvalidConfig(format!(
                "feature vector of length {} for vocabulary of {}",
                features.len(),
                self.v
            )));
        }
        Ok(())
    }

    fn check_token(&self, id: usize) -> Result<(), ModelError> {
        if id >= self.v {
            return Err(ModelError::InvalidToken { id, vocab: self.v });
        }
        Ok(())
    }
}

/// Value-baseline parameters: a linear map from context features to the
/// expected combined reward.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueParameters {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ValueParameters {
    pub fn zeros(v: usize) -> ValueParameters {
        ValueParameters { weights: vec![0.0; v], bias: 0.0 }
    }

    /// Predicted expected reward for a context feature vector.
    pub fn predict(&self, features: &[f64]) -> f64 {
        assert_eq!(features.len(), self.weights.len(), "feature length mismatch");
        let mut acc = self.bias;
        for (w, f) in self.weights.iter().zip(features) {
            acc += w * f;
        }
        acc
    }
}

/// Everything the optimizer touches: the live policy, the frozen
/// reference it is KL-anchored to, and the value baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub policy: PolicyParameters,
    pub reference: PolicyParameters,
    pub value: ValueParameters,
}

impl PolicyState {
    /// Freezes a copy of `policy` as the reference model.
    pub fn new(policy: PolicyParameters) -> PolicyState {
        let v = policy.v;
        PolicyState { reference: policy.clone_frozen(), policy, value: ValueParameters::zeros(v) }
    }
}

/// One sampled (or greedily decoded) summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    /// Emitted token ids in order, including a terminating `<eos>` when
    /// one was sampled before the length cap.
    pub token_ids: Vec<usize>,
    /// Space-joined non-reserved tokens.
    pub text: String,
    /// Count of non-reserved emitted tokens.
    pub token_length: usize,
    /// Untempered log-probability of each emitted token, aligned with
    /// `token_ids`.
    pub step_log_probs: Vec<f64>,
}

/// `h_ctx = E^T f`; shared by every step of an episode.
pub(crate) fn context_hidden(params: &PolicyParameters, features: &[f64]) -> Vec<f64> {
    let h = params.h;
    let mut hidden = vec![0.0; h];
    for (v, &f) in features.iter().enumerate() {
        if f != 0.0 {
            let row = &params.context_encoder[v * h..(v + 1) * h];
            for (j, &e) in row.iter().enumerate() {
                hidden[j] += f * e;
            }
        }
    }
    hidden
}

/// Logits for the step after `prev` given a precomputed context hidden.
pub(crate) fn step_logits(params: &PolicyParameters, h_ctx: &[f64], prev: usize) -> Vec<f64> {
    let (v, h) = (params.v, params.h);
    let mut logits = params.biases.clone();
    // logits[t] += sum_k W[k,t] * hidden[k]; the first H hidden entries
    // are h_ctx, the last H are the previous token's embedding row.
    for (k, &hk) in h_ctx.iter().enumerate() {
        if hk != 0.0 {
            let row = &params.output[k * v..(k + 1) * v];
            for (t, &w) in row.iter().enumerate() {
                logits[t] += hk * w;
            }
        }
    }
    let emb = &params.token_embedding[prev * h..(prev + 1) * h];
    for (j, &m) in emb.iter().enumerate() {
        if m != 0.0 {
            let row = &params.output[(h + j) * v..(h + j + 1) * v];
            for (t, &w) in row.iter().enumerate() {
                logits[t] += m * w;
            }
        }
    }
    logits
}

/// Stable softmax with temperature and a positivity floor. Returns an
/// error if any logit is non-finite.
pub(crate) fn softmax(logits: &[f64], temperature: f64) -> Result<Vec<f64>, ModelError> {
    if !(temperature > 0.0) {
        return Err(ModelError::InvalidConfig("temperature must be positive".into()));
    }
    let mut max = f64::NEG_INFINITY;
    for &z in logits {
        if !z.is_finite() {
            return Err(ModelError::NonFiniteLogit);
        }
        max = max.max(z / temperature);
    }
    let mut probs: Vec<f64> = logits.iter().map(|&z| (z / temperature - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    let mut renorm = 0.0;
    for p in probs.iter_mut() {
        *p = (*p / sum).max(PROB_FLOOR);
        renorm += *p;
    }
    for p in probs.iter_mut() {
        *p /= renorm;
    }
    Ok(probs)
}

/// Stable log-softmax at temperature 1.
pub(crate) fn log_softmax(logits: &[f64]) -> Result<Vec<f64>, ModelError> {
    let mut max = f64::NEG_INFINITY;
    for &z in logits {
        if !z.is_finite() {
            return Err(ModelError::NonFiniteLogit);
        }
        max = max.max(z);
    }
    let log_sum = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
    Ok(logits.iter().map(|&z| z - log_sum).collect())
}

/// Next-token distribution given the context bag and the previous token.
pub fn step_distribution(
    params: &PolicyParameters,
    context_features: &[f64],
    prev_token: usize,
    temperature: f64,
) -> Result<Vec<f64>, ModelError> {
    params.check_features(context_features)?;
    params.check_token(prev_token)?;
    let h_ctx = context_hidden(params, context_features);
    softmax(&step_logits(params, &h_ctx, prev_token), temperature)
}

/// Samples a summary autoregressively at `temperature`, stopping at
/// `<eos>` or after `max_len` tokens. Stored log-probs are untempered.
pub fn sample_summary(
    params: &PolicyParameters,
    vocab: &Vocabulary,
    context_features: &[f64],
    temperature: f64,
    max_len: usize,
    rng: &mut impl rand::Rng,
) -> Result<Summary, ModelError> {
    params.check_features(context_features)?;
    let h_ctx = context_hidden(params, context_features);
    let mut prev = BOS;
    let mut token_ids = Vec::new();
    let mut step_log_probs = Vec::new();
    for _ in 0..max_len {
        let logits = step_logits(params, &h_ctx, prev);
        let probs = softmax(&logits, temperature)?;
        let token = sample_index(&probs, rng.gen::<f64>());
        let log_probs = log_softmax(&logits)?;
        token_ids.push(token);
        step_log_probs.push(log_probs[token]);
        prev = token;
        if token == EOS {
            break;
        }
    }
    Ok(finish_summary(vocab, token_ids, step_log_probs))
}

/// Greedy (argmax) decode; ties go to the lowest token id. Used for
/// held-out evaluation so eval summaries are deterministic.
pub fn greedy_summary(
    params: &PolicyParameters,
    vocab: &Vocabulary,
    context_features: &[f64],
    max_len: usize,
) -> Result<Summary, ModelError> {
    params.check_features(context_features)?;
    let h_ctx = context_hidden(params, context_features);
    let mut prev = BOS;
    let mut token_ids = Vec::new();
    let mut step_log_probs = Vec::new();
    for _ in 0..max_len {
        let logits = step_logits(params, &h_ctx, prev);
        let log_probs = log_softmax(&logits)?;
        let mut best = 0;
        for (i, &lp) in log_probs.iter().enumerate() {
            if lp > log_probs[best] {
                best = i;
            }
        }
        token_ids.push(best);
        step_log_probs.push(log_probs[best]);
        prev = best;
        if best == EOS {
            break;
        }
    }
    Ok(finish_summary(vocab, token_ids, step_log_probs))
}

fn finish_summary(vocab: &Vocabulary, token_ids: Vec<usize>, step_log_probs: Vec<f64>) -> Summary {
    let text = vocab.decode(&token_ids);
    let token_length = token_ids.iter().filter(|&&id| id >= RESERVED).count();
    Summary { token_ids, text, token_length, step_log_probs }
}

fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Untempered log-probability of emitting `token_ids` from `<bos>`.
/// Empty sequences have log-probability 0.
pub fn sequence_log_prob(
    params: &PolicyParameters,
    context_features: &[f64],
    token_ids: &[usize],
) -> Result<f64, ModelError> {
    params.check_features(context_features)?;
    let h_ctx = context_hidden(params, context_features);
    let mut prev = BOS;
    let mut total = 0.0;
    for &id in token_ids {
        params.check_token(id)?;
        let log_probs = log_softmax(&step_logits(params, &h_ctx, prev))?;
        total += log_probs[id];
        prev = id;
    }
    Ok(total)
}

/// Exact one-step KL(p_params || p_ref) at the state `(context, prev)`,
/// summed over the full vocabulary at temperature 1.
pub fn kl_step(
    params: &PolicyParameters,
    ref_params: &PolicyParameters,
    context_features: &[f64],
    prev_token: usize,
) -> Result<f64, ModelError> {
    params.check_features(context_features)?;
    params.check_token(prev_token)?;
    let h_p = context_hidden(params, context_features);
    let h_q = context_hidden(ref_params, context_features);
    kl_at_state(params, ref_params, &h_p, &h_q, prev_token)
}

pub(crate) fn kl_at_state(
    params: &PolicyParameters,
    ref_params: &PolicyParameters,
    h_p: &[f64],
    h_q: &[f64],
    prev: usize,
) -> Result<f64, ModelError> {
    let p = softmax(&step_logits(params, h_p, prev), 1.0)?;
    let q = softmax(&step_logits(ref_params, h_q, prev), 1.0)?;
    let mut kl = 0.0;
    for (pi, qi) in p.iter().zip(&q) {
        kl += pi * (pi.ln() - qi.ln());
    }
    Ok(kl)
}

/// Per-episode KL: the sum of [`kl_step`] over every state the sampled
/// trajectory visited (one state per emitted token).
pub fn episode_kl(
    params: &PolicyParameters,
    ref_params: &PolicyParameters,
    context_features: &[f64],
    token_ids: &[usize],
) -> Result<f64, ModelError> {
    params.check_features(context_features)?;
    let h_p = context_hidden(params, context_features);
    let h_q = context_hidden(ref_params, context_features);
    let mut prev = BOS;
    let mut total = 0.0;
    for &id in token_ids {
        params.check_token(id)?;
        total += kl_at_state(params, ref_params, &h_p, &h_q, prev)?;
        prev = id;
    }
    Ok(total)
}
