//! Analytic gradients for the policy and value models.
//!
//! Both policy-side gradients reduce to per-state gradients on the step
//! logits, then one shared backprop through the linear layers. Because
//! `h_ctx` is constant across an episode's steps, the output-layer and
//! encoder contributions depend only on the SUM of per-state logit
//! gradients, and the embedding contributions only on per-previous-token
//! sums, which keeps the backward pass at roughly forward-pass cost.

use super::{
    context_hidden, log_softmax, softmax, step_logits, ModelError, PolicyParameters,
    ValueParameters, BOS,
};
use std::collections::BTreeMap;

/// Gradient of `weight * log pi(token_ids | context)` with respect to
/// every parameter block. `weight` is typically an advantage.
pub fn grad_log_prob(
    params: &PolicyParameters,
    context_features: &[f64],
    token_ids: &[usize],
    weight: f64,
) -> Result<PolicyParameters, ModelError> {
    params.check_features(context_features)?;
    let h_ctx = context_hidden(params, context_features);
    let mut acc = LogitGradAccumulator::new(params.v);
    let mut prev = BOS;
    for &id in token_ids {
        params.check_token(id)?;
        let logits = step_logits(params, &h_ctx, prev);
        let p = softmax(&logits, 1.0)?;
        // d/dz of log softmax(z)[id] is onehot(id) - p.
        let mut g: Vec<f64> = p.iter().map(|&pi| -weight * pi).collect();
        g[id] += weight;
        acc.push(prev, g);
        prev = id;
    }
    Ok(acc.backprop(params, context_features, &h_ctx))
}

/// Gradient of the summed per-state KL(pi_params || pi_ref) along the
/// trajectory, with respect to `params` (the reference is frozen).
pub fn grad_episode_kl(
    params: &PolicyParameters,
    ref_params: &PolicyParameters,
    context_features: &[f64],
    token_ids: &[usize],
) -> Result<PolicyParameters, ModelError> {
    params.check_features(context_features)?;
    let h_p = context_hidden(params, context_features);
    let h_q = context_hidden(ref_params, context_features);
    let mut acc = LogitGradAccumulator::new(params.v);
    let mut prev = BOS;
    for &id in token_ids {
        params.check_token(id)?;
        let lp = log_softmax(&step_logits(params, &h_p, prev))?;
        let lq = log_softmax(&step_logits(ref_params, &h_q, prev))?;
        let p = softmax(&step_logits(params, &h_p, prev), 1.0)?;
        let kl: f64 = p.iter().zip(lp.iter().zip(&lq)).map(|(&pi, (&a, &b))| pi * (a - b)).sum();
        // d KL / dz_i = p_i * ((log p_i - log q_i) - KL).
        let g: Vec<f64> = p
            .iter()
            .zip(lp.iter().zip(&lq))
            .map(|(&pi, (&a, &b))| pi * ((a - b) - kl))
            .collect();
        acc.push(prev, g);
        prev = id;
    }
    Ok(acc.backprop(params, context_features, &h_p))
}

/// Collects per-state logit gradients, then backpropagates them through
/// the shared linear structure in one pass.
struct LogitGradAccumulator {
    /// Sum of logit gradients over all states.
    total: Vec<f64>,
    /// Sum of logit gradients grouped by the state's previous token.
    by_prev: BTreeMap<usize, Vec<f64>>,
}

impl LogitGradAccumulator {
    fn new(v: usize) -> Self {
        LogitGradAccumulator { total: vec![0.0; v], by_prev: BTreeMap::new() }
    }

    fn push(&mut self, prev: usize, g: Vec<f64>) {
        for (t, &gi) in self.total.iter_mut().zip(&g) {
            *t += gi;
        }
        let slot = self.by_prev.entry(prev).or_insert_with(|| vec![0.0; g.len()]);
        for (s, gi) in slot.iter_mut().zip(&g) {
            *s += gi;
        }
    }

    fn backprop(
        self,
        params: &PolicyParameters,
        features: &[f64],
        h_ctx: &[f64],
    ) -> PolicyParameters {
        let (v, h) = (params.v, params.h);
        let mut grad = PolicyParameters::zeros(v, h);

        grad.biases.copy_from_slice(&self.total);

        // Output rows 0..h see the same h_ctx at every state, so their
        // gradient is h_ctx[k] * total. Rows h..2h see the embedding of
        // the state's previous token, grouped per distinct prev.
        for k in 0..h {
            let hk = h_ctx[k];
            if hk != 0.0 {
                let row = &mut grad.output[k * v..(k + 1) * v];
                for (r, &g) in row.iter_mut().zip(&self.total) {
                    *r += hk * g;
                }
            }
        }
        for (&prev, g_prev) in &self.by_prev {
            let emb = &params.token_embedding[prev * h..(prev + 1) * h];
            for (j, &m) in emb.iter().enumerate() {
                if m != 0.0 {
                    let row = &mut grad.output[(h + j) * v..(h + j + 1) * v];
                    for (r, &g) in row.iter_mut().zip(g_prev) {
                        *r += m * g;
                    }
                }
            }
        }

        // hidden gradient: W rows dotted with the aggregated logit grads.
        let mut hctx_grad = vec![0.0; h];
        for (k, hg) in hctx_grad.iter_mut().enumerate() {
            let row = &params.output[k * v..(k + 1) * v];
            *hg = row.iter().zip(&self.total).map(|(&w, &g)| w * g).sum();
        }
        for (&prev, g_prev) in &self.by_prev {
            let rows = &mut grad.token_embedding[prev * h..(prev + 1) * h];
            for (j, slot) in rows.iter_mut().enumerate() {
                let row = &params.output[(h + j) * v..(h + j + 1) * v];
                *slot += row.iter().zip(g_prev).map(|(&w, &g)| w * g).sum::<f64>();
            }
        }

        // Encoder: h_ctx = E^T f, so dL/dE[v_i][j] = f[v_i] * hctx_grad[j].
        for (vi, &f) in features.iter().enumerate() {
            if f != 0.0 {
                let row = &mut grad.context_encoder[vi * h..(vi + 1) * h];
                for (r, &hg) in row.iter_mut().zip(&hctx_grad) {
                    *r += f * hg;
                }
            }
        }
        grad
    }
}

/// Gradient of `0.5 * (target - prediction)^2` for the value model,
/// expressed through `residual = prediction - target`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGradient {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ValueParameters {
    /// See [`ValueGradient`]; `residual` must be `prediction - target`.
    pub fn grad(&self, features: &[f64], residual: f64) -> ValueGradient {
        assert_eq!(features.len(), self.weights.len(), "feature length mismatch");
        ValueGradient { weights: features.iter().map(|&f| residual * f).collect(), bias: residual }
    }

    /// `self -= scale * grad`; gradient descent convention.
    pub fn step(&mut self, grad: &ValueGradient, scale: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grad.weights) {
            *w -= scale * g;
        }
        self.bias -= scale * grad.bias;
    }
}
