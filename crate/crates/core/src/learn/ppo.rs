//! Clipped-surrogate policy optimization: advantage estimation, the loss
//! with its exact gradient, and the Adam optimizer.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::network::{entropy, log_prob, ForwardCache, PolicyParams, ACTION_DIM};
use crate::geom::Vec2;

#[derive(Debug, Error, PartialEq)]
pub enum PpoError {
    #[error("non-finite loss {0}")]
    NonFiniteLoss(f64),
    #[error("batch arrays have inconsistent lengths")]
    RaggedBatch,
}

/// Generalized advantage estimation over one environment's sequence.
///
/// `dones[t]` marks that the episode ended after transition `t`;
/// `bootstrap` is the value estimate of the state following the last step.
/// Returns `(advantages, returns)` with `returns = advantages + values`.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Rollout data, flattened over (environment, step).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBatch {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec2>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn validate(&self) -> Result<(), PpoError> {
        let n = self.len();
        let lens = [
            self.actions.len(),
            self.log_probs.len(),
            self.rewards.len(),
            self.values.len(),
            self.dones.len(),
            self.advantages.len(),
            self.returns.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(PpoError::RaggedBatch);
        }
        Ok(())
    }

    /// Shifts and scales advantages to zero mean and unit (population) std.
    pub fn normalize_advantages(&mut self) {
        let n = self.advantages.len() as f64;
        if n == 0.0 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n;
        let var = self.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-12);
        for a in &mut self.advantages {
            *a = (*a - mean) / std;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub lr: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            epochs: 5,
            minibatch_size: 256,
            lr: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
        }
    }
}

/// Loss components averaged over a minibatch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    /// `-E[min(r A, clip(r) A)]`.
    pub policy: f64,
    /// `E[(V - R)^2]`.
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
    pub clip_fraction: f64,
}

/// Clipped-surrogate loss and its exact gradient over `indices`.
pub fn loss_and_grad(
    params: &PolicyParams,
    batch: &RolloutBatch,
    indices: &[usize],
    cfg: &PpoConfig,
) -> Result<(LossTerms, PolicyParams), super::network::NetworkError> {
    let m = indices.len() as f64;
    let mut grad = params.zeros_like();
    let mut cache = ForwardCache::default();
    let mut terms = LossTerms::default();
    let std = [libm::exp(params.log_std[0]), libm::exp(params.log_std[1])];

    for &i in indices {
        let out = params.forward_cached(&batch.observations[i], &mut cache)?;
        let action = batch.actions[i];
        let adv = batch.advantages[i];
        let lp = log_prob(out.mean, out.log_std, action);
        let ratio = libm::exp(lp - batch.log_probs[i]);
        let clipped = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
        let (surrogate, d_lp) = if ratio * adv <= clipped * adv {
            (ratio * adv, -ratio * adv / m)
        } else {
            (clipped * adv, 0.0)
        };
        if clipped != ratio {
            terms.clip_fraction += 1.0 / m;
        }
        terms.policy -= surrogate / m;
        let v_err = out.value - batch.returns[i];
        terms.value += v_err * v_err / m;

        let diff = [action.x - out.mean.x, action.y - out.mean.y];
        let mut d_mean = [0.0; ACTION_DIM];
        for k in 0..ACTION_DIM {
            let z = diff[k] / std[k];
            d_mean[k] = d_lp * diff[k] / (std[k] * std[k]);
            grad.log_std[k] += d_lp * (z * z - 1.0);
        }
        let d_value = cfg.value_coef * 2.0 * v_err / m;
        params.backward(&cache, d_mean, d_value, &mut grad);
    }

    terms.entropy = entropy(params.log_std);
    for g in &mut grad.log_std {
        *g -= cfg.entropy_coef;
    }
    terms.total = terms.policy + cfg.value_coef * terms.value - cfg.entropy_coef * terms.entropy;
    Ok((terms, grad))
}

/// Adam with bias correction:
/// `m = b1 m + (1 - b1) g`, `v = b2 v + (1 - b2) g^2`,
/// `theta -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: PolicyParams,
    pub v: PolicyParams,
}

impl Adam {
    pub fn new(params: &PolicyParams) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut PolicyParams, grad: &PolicyParams, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let grads = grad.tensors();
        for (((p, m), v), (_, g)) in params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(grads)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
            }
        }
    }
}

pub fn grad_norm(grad: &PolicyParams) -> f64 {
    grad.tensors()
        .iter()
        .flat_map(|(_, t)| t.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

fn scale_grad(grad: &mut PolicyParams, s: f64) {
    for t in grad.tensors_mut() {
        t.iter_mut().for_each(|g| *g *= s);
    }
}

/// Runs `epochs` passes of shuffled minibatch updates. Advantages are
/// normalized once over the whole batch before the first pass. Returns the
/// loss terms averaged over all minibatches.
pub fn ppo_update<R: Rng>(
    params: &mut PolicyParams,
    optimizer: &mut Adam,
    batch: &mut RolloutBatch,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<LossTerms, PpoError> {
    batch.validate()?;
    batch.normalize_advantages();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut sum = LossTerms::default();
    let mut count = 0.0;
    let mb = cfg.minibatch_size.max(1);
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(mb) {
            let (terms, mut grad) = loss_and_grad(params, batch, chunk, cfg).map_err(|_| PpoError::RaggedBatch)?;
            if !terms.total.is_finite() {
                return Err(PpoError::NonFiniteLoss(terms.total));
            }
            let norm = grad_norm(&grad);
            if cfg.max_grad_norm > 0.0 && norm > cfg.max_grad_norm {
                scale_grad(&mut grad, cfg.max_grad_norm / norm);
            }
            optimizer.step(params, &grad, cfg.lr);
            sum.policy += terms.policy;
            sum.value += terms.value;
            sum.entropy += terms.entropy;
            sum.total += terms.total;
            sum.clip_fraction += terms.clip_fraction;
            count += 1.0;
        }
    }
    if count > 0.0 {
        sum.policy /= count;
        sum.value /= count;
        sum.entropy /= count;
        sum.total /= count;
        sum.clip_fraction /= count;
    }
    Ok(sum)
}
