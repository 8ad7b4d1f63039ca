//! Feed-forward Gaussian policy and value function on separate tanh
//! trunks, with hand-written backpropagation.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;

pub const ACTION_DIM: usize = 2;
/// `0.5 * ln(2 pi)`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("observation length {got} does not match network input {expected}")]
    ShapeMismatch { expected: usize, got: usize },
}

/// Dense layer `y = W x + b` with `W` stored row-major (`out x in`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Gaussian weights with standard deviation `gain / sqrt(inputs)`, zero bias.
    pub fn init<R: Rng>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        let scale = gain / (inputs as f64).sqrt();
        let weight = (0..inputs * outputs)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            inputs,
            outputs,
            weight,
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(o, &b)| {
            let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>()
        }));
    }

    /// Accumulates parameter gradients into `grad` and, when requested,
    /// returns the gradient with respect to the input.
    fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense, dx: Option<&mut Vec<f64>>) {
        for (o, &g) in dy.iter().enumerate() {
            grad.bias[o] += g;
            let row = &mut grad.weight[o * self.inputs..(o + 1) * self.inputs];
            for (w, xi) in row.iter_mut().zip(x) {
                *w += g * xi;
            }
        }
        if let Some(dx) = dx {
            dx.clear();
            dx.resize(self.inputs, 0.0);
            for (o, &g) in dy.iter().enumerate() {
                let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                for (d, w) in dx.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
    }
}

/// Two-layer tanh trunk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trunk {
    pub layer1: Dense,
    pub layer2: Dense,
}

#[derive(Clone, Debug, Default)]
struct TrunkCache {
    h1: Vec<f64>,
    h2: Vec<f64>,
}

impl Trunk {
    fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            layer1: Dense::zeros(inputs, hidden),
            layer2: Dense::zeros(hidden, hidden),
        }
    }

    fn init<R: Rng>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            layer1: Dense::init(inputs, hidden, std::f64::consts::SQRT_2, rng),
            layer2: Dense::init(hidden, hidden, std::f64::consts::SQRT_2, rng),
        }
    }

    fn forward(&self, x: &[f64], cache: &mut TrunkCache) {
        self.layer1.forward(x, &mut cache.h1);
        cache.h1.iter_mut().for_each(|h| *h = libm::tanh(*h));
        self.layer2.forward(&cache.h1, &mut cache.h2);
        cache.h2.iter_mut().for_each(|h| *h = libm::tanh(*h));
    }

    /// `dh2` is the gradient with respect to the trunk output.
    fn backward(&self, x: &[f64], cache: &TrunkCache, mut dh2: Vec<f64>, grad: &mut Trunk) {
        for (d, h) in dh2.iter_mut().zip(&cache.h2) {
            *d *= 1.0 - h * h;
        }
        let mut dh1 = Vec::new();
        self.layer2.backward(&cache.h1, &dh2, &mut grad.layer2, Some(&mut dh1));
        for (d, h) in dh1.iter_mut().zip(&cache.h1) {
            *d *= 1.0 - h * h;
        }
        self.layer1.backward(x, &dh1, &mut grad.layer1, None);
    }
}

/// Policy and value parameters (separate trunks). Also used as the
/// gradient container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub policy_trunk: Trunk,
    pub mean_head: Dense,
    pub value_trunk: Trunk,
    pub value_head: Dense,
    pub log_std: [f64; ACTION_DIM],
}

/// Output of a forward pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec2,
    pub log_std: [f64; ACTION_DIM],
    pub value: f64,
}

/// Activations kept for backpropagation.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache {
    input: Vec<f64>,
    policy: TrunkCache,
    value: TrunkCache,
    scratch: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(obs_dim: usize, hidden: usize) -> Self {
        Self {
            policy_trunk: Trunk::zeros(obs_dim, hidden),
            mean_head: Dense::zeros(hidden, ACTION_DIM),
            value_trunk: Trunk::zeros(obs_dim, hidden),
            value_head: Dense::zeros(hidden, 1),
            log_std: [0.0; ACTION_DIM],
        }
    }

    pub fn init<R: Rng>(obs_dim: usize, hidden: usize, init_log_std: f64, rng: &mut R) -> Self {
        Self {
            policy_trunk: Trunk::init(obs_dim, hidden, rng),
            mean_head: Dense::init(hidden, ACTION_DIM, 0.01, rng),
            value_trunk: Trunk::init(obs_dim, hidden, rng),
            value_head: Dense::init(hidden, 1, 1.0, rng),
            log_std: [init_log_std; ACTION_DIM],
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.policy_trunk.layer1.inputs
    }

    pub fn hidden(&self) -> usize {
        self.policy_trunk.layer1.outputs
    }

    /// Named parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("policy_trunk.layer1.weight", &self.policy_trunk.layer1.weight),
            ("policy_trunk.layer1.bias", &self.policy_trunk.layer1.bias),
            ("policy_trunk.layer2.weight", &self.policy_trunk.layer2.weight),
            ("policy_trunk.layer2.bias", &self.policy_trunk.layer2.bias),
            ("mean_head.weight", &self.mean_head.weight),
            ("mean_head.bias", &self.mean_head.bias),
            ("value_trunk.layer1.weight", &self.value_trunk.layer1.weight),
            ("value_trunk.layer1.bias", &self.value_trunk.layer1.bias),
            ("value_trunk.layer2.weight", &self.value_trunk.layer2.weight),
            ("value_trunk.layer2.bias", &self.value_trunk.layer2.bias),
            ("value_head.weight", &self.value_head.weight),
            ("value_head.bias", &self.value_head.bias),
            ("log_std", &self.log_std),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.policy_trunk.layer1.weight,
            &mut self.policy_trunk.layer1.bias,
            &mut self.policy_trunk.layer2.weight,
            &mut self.policy_trunk.layer2.bias,
            &mut self.mean_head.weight,
            &mut self.mean_head.bias,
            &mut self.value_trunk.layer1.weight,
            &mut self.value_trunk.layer1.bias,
            &mut self.value_trunk.layer2.weight,
            &mut self.value_trunk.layer2.bias,
            &mut self.value_head.weight,
            &mut self.value_head.bias,
            &mut self.log_std,
        ]
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.obs_dim(), self.hidden())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    pub fn forward_cached(&self, obs: &[f64], cache: &mut ForwardCache) -> Result<PolicyOutput, NetworkError> {
        if obs.len() != self.obs_dim() {
            return Err(NetworkError::ShapeMismatch {
                expected: self.obs_dim(),
                got: obs.len(),
            });
        }
        cache.input.clear();
        cache.input.extend_from_slice(obs);
        self.policy_trunk.forward(obs, &mut cache.policy);
        self.mean_head.forward(&cache.policy.h2, &mut cache.scratch);
        let mean = Vec2::new(cache.scratch[0], cache.scratch[1]);
        self.value_trunk.forward(obs, &mut cache.value);
        self.value_head.forward(&cache.value.h2, &mut cache.scratch);
        Ok(PolicyOutput {
            mean,
            log_std: self.log_std,
            value: cache.scratch[0],
        })
    }

    /// Backpropagates `d_mean` and `d_value` through the cached pass into
    /// `grad` (accumulating). Gradients for `log_std` are handled by callers.
    pub fn backward(&self, cache: &ForwardCache, d_mean: [f64; ACTION_DIM], d_value: f64, grad: &mut PolicyParams) {
        let mut dh = Vec::new();
        self.mean_head.backward(&cache.policy.h2, &d_mean, &mut grad.mean_head, Some(&mut dh));
        self.policy_trunk.backward(&cache.input, &cache.policy, dh, &mut grad.policy_trunk);
        let mut dh = Vec::new();
        self.value_head.backward(&cache.value.h2, &[d_value], &mut grad.value_head, Some(&mut dh));
        self.value_trunk.backward(&cache.input, &cache.value, dh, &mut grad.value_trunk);
    }
}

pub fn policy_forward(params: &PolicyParams, obs: &[f64]) -> Result<PolicyOutput, NetworkError> {
    params.forward_cached(obs, &mut ForwardCache::default())
}

/// Log-density of a diagonal Gaussian.
pub fn log_prob(mean: Vec2, log_std: [f64; ACTION_DIM], action: Vec2) -> f64 {
    let z = [
        (action.x - mean.x) / libm::exp(log_std[0]),
        (action.y - mean.y) / libm::exp(log_std[1]),
    ];
    (0..ACTION_DIM)
        .map(|k| -0.5 * z[k] * z[k] - log_std[k] - HALF_LN_2PI)
        .sum()
}

/// Entropy `sum(log_std + 0.5 ln(2 pi e))`.
pub fn entropy(log_std: [f64; ACTION_DIM]) -> f64 {
    log_std.iter().map(|l| l + HALF_LN_2PI + 0.5).sum()
}

/// Draws an action from the diagonal Gaussian and returns its log-density.
pub fn sample_action<R: Rng>(mean: Vec2, log_std: [f64; ACTION_DIM], rng: &mut R) -> (Vec2, f64) {
    let e0: f64 = rng.sample(StandardNormal);
    let e1: f64 = rng.sample(StandardNormal);
    let action = Vec2::new(
        mean.x + libm::exp(log_std[0]) * e0,
        mean.y + libm::exp(log_std[1]) * e1,
    );
    (action, log_prob(mean, log_std, action))
}
