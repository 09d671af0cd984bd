//! Gaussian policies and value critics.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::{Cache, MlpLayout};
use crate::error::Result;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// How raw network samples map to environment actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionHead {
    /// Gaussian `z`, executed as `max * (tanh z + 1) / 2`.
    Squashed { max: f64 },
    /// Gaussian `z`, executed as the binary `z > 0`.
    Threshold,
    /// Independent Bernoulli per dimension; the network outputs logits.
    Bernoulli,
}

/// A draw from a policy head.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Pre-squash Gaussian sample, or 0/1 outcomes for the Bernoulli head.
    pub raw: Vec<f64>,
    /// The action executed in the environment.
    pub action: Vec<f64>,
    /// Log-density of `raw`; the quantity PPO ratios are taken over.
    pub log_prob_raw: f64,
    /// Log-density of `action`, including the squashing correction.
    pub log_prob: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], x: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(x)
        .map(|((m, ls), x)| {
            let z = (x - m) * (-ls).exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

impl ActionHead {
    pub fn uses_log_std(&self) -> bool {
        !matches!(self, ActionHead::Bernoulli)
    }

    pub fn execute(&self, raw: &[f64]) -> Vec<f64> {
        match *self {
            ActionHead::Squashed { max } => raw.iter().map(|z| max * (z.tanh() + 1.0) / 2.0).collect(),
            ActionHead::Threshold => raw.iter().map(|z| if *z > 0.0 { 1.0 } else { 0.0 }).collect(),
            ActionHead::Bernoulli => raw.to_vec(),
        }
    }

    /// `log |d action / d raw|` summed over dimensions (0 for discrete heads).
    fn log_det(&self, raw: &[f64]) -> f64 {
        match *self {
            ActionHead::Squashed { max } => raw
                .iter()
                .map(|z| {
                    // 1 - tanh^2 z = 4 / (e^z + e^-z)^2, computed in log space.
                    let a = z.abs();
                    (max / 2.0).ln() + 2.0 * 2f64.ln() - 2.0 * (a + (-2.0 * a).exp().ln_1p())
                })
                .sum(),
            _ => 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, mean: &[f64], log_std: &[f64], rng: &mut R) -> Sample {
        let raw: Vec<f64> = match self {
            ActionHead::Bernoulli => mean
                .iter()
                .map(|l| if rng.random::<f64>() < sigmoid(*l) { 1.0 } else { 0.0 })
                .collect(),
            _ => mean
                .iter()
                .zip(log_std)
                .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        };
        let log_prob_raw = self.log_prob(mean, log_std, &raw);
        Sample {
            action: self.execute(&raw),
            log_prob: log_prob_raw - self.log_det(&raw),
            log_prob_raw,
            raw,
        }
    }

    /// Mode of the head, used for deterministic evaluation.
    pub fn mode(&self, mean: &[f64]) -> Vec<f64> {
        match self {
            ActionHead::Bernoulli => mean.iter().map(|l| if *l > 0.0 { 1.0 } else { 0.0 }).collect(),
            _ => mean.to_vec(),
        }
    }

    /// Log-density of a raw sample.
    pub fn log_prob(&self, mean: &[f64], log_std: &[f64], raw: &[f64]) -> f64 {
        match self {
            ActionHead::Bernoulli => mean.iter().zip(raw).map(|(l, a)| a * l - softplus(*l)).sum(),
            _ => gaussian_log_prob(mean, log_std, raw),
        }
    }

    /// Adds `scale * d log_prob` to the mean and log-std gradients.
    pub fn log_prob_grad(&self, mean: &[f64], log_std: &[f64], raw: &[f64], scale: f64, d_mean: &mut [f64], d_log_std: &mut [f64]) {
        match self {
            ActionHead::Bernoulli => {
                for k in 0..mean.len() {
                    d_mean[k] += scale * (raw[k] - sigmoid(mean[k]));
                }
            }
            _ => {
                for k in 0..mean.len() {
                    let inv_var = (-2.0 * log_std[k]).exp();
                    let diff = raw[k] - mean[k];
                    d_mean[k] += scale * diff * inv_var;
                    d_log_std[k] += scale * (diff * diff * inv_var - 1.0);
                }
            }
        }
    }

    pub fn entropy(&self, mean: &[f64], log_std: &[f64]) -> f64 {
        match self {
            ActionHead::Bernoulli => mean
                .iter()
                .map(|l| {
                    let p = sigmoid(*l);
                    softplus(*l) - p * l
                })
                .sum(),
            _ => log_std.iter().map(|ls| ls + 0.5 * (1.0 + LN_2PI)).sum(),
        }
    }

    /// Adds `scale * d entropy` to the mean and log-std gradients.
    pub fn entropy_grad(&self, mean: &[f64], scale: f64, d_mean: &mut [f64], d_log_std: &mut [f64]) {
        match self {
            ActionHead::Bernoulli => {
                for (d, l) in d_mean.iter_mut().zip(mean) {
                    let p = sigmoid(*l);
                    *d -= scale * l * p * (1.0 - p);
                }
            }
            _ => d_log_std.iter_mut().for_each(|d| *d += scale),
        }
    }
}

/// Log-density of an executed mitigation `u` under the squashed head.
pub fn squashed_log_prob(mean: f64, log_std: f64, u: f64, max: f64) -> f64 {
    let z = (2.0 * u / max - 1.0).atanh();
    let head = ActionHead::Squashed { max };
    gaussian_log_prob(&[mean], &[log_std], &[z]) - head.log_det(&[z])
}

/// A policy network: MLP producing the head's mean (or logits) followed by a
/// free log-std vector, all in one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub layout: MlpLayout,
    pub head: ActionHead,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

impl PolicyNet {
    pub fn new(input: usize, hidden: usize, action_dim: usize, head: ActionHead) -> Self {
        PolicyNet {
            layout: MlpLayout::new(input, hidden, action_dim),
            head,
            log_std_min: -5.0,
            log_std_max: 2.0,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.layout.output
    }

    pub fn num_params(&self) -> usize {
        self.layout.num_params() + self.action_dim()
    }

    /// Orthogonal init with output gain 0.01, output bias `mean_bias` and a
    /// constant log-std.
    pub fn init<R: Rng + ?Sized>(&self, log_std_init: f64, mean_bias: f64, rng: &mut R) -> Vec<f64> {
        let mut params = self.layout.init(0.01, rng);
        let n = params.len();
        params[n - self.action_dim()..].iter_mut().for_each(|b| *b = mean_bias);
        params.extend(std::iter::repeat_n(log_std_init, self.action_dim()));
        params
    }

    pub fn mlp_params<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[..self.layout.num_params()]
    }

    pub fn log_std<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.layout.num_params()..]
    }

    pub fn clamp_log_std(&self, params: &mut [f64]) {
        let n = self.layout.num_params();
        for v in &mut params[n..] {
            *v = v.clamp(self.log_std_min, self.log_std_max);
        }
    }

    /// Means for a batch of observations.
    pub fn forward(&self, params: &[f64], obs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.layout.forward(self.mlp_params(params), obs)
    }

    pub fn forward_cached(&self, params: &[f64], obs: ArrayView2<f64>) -> Result<Cache> {
        self.layout.forward_cached(self.mlp_params(params), obs)
    }

    /// Accumulates gradients given `d_mean` per row and a summed `d_log_std`.
    pub fn backward(&self, params: &[f64], cache: &Cache, d_mean: ArrayView2<f64>, d_log_std: &[f64], grads: &mut [f64]) {
        let n = self.layout.num_params();
        self.layout.backward(self.mlp_params(params), cache, d_mean, &mut grads[..n]);
        for (g, d) in grads[n..].iter_mut().zip(d_log_std) {
            if self.head.uses_log_std() {
                *g += d;
            }
        }
    }
}

/// A scalar value critic.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    pub layout: MlpLayout,
}

impl ValueNet {
    pub fn new(input: usize, hidden: usize) -> Self {
        ValueNet {
            layout: MlpLayout::new(input, hidden, 1),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout.num_params()
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.layout.init(1.0, rng)
    }

    pub fn forward(&self, params: &[f64], features: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self.layout.forward(params, features)?.column(0).to_vec())
    }

    pub fn forward_cached(&self, params: &[f64], features: ArrayView2<f64>) -> Result<Cache> {
        self.layout.forward_cached(params, features)
    }

    pub fn backward(&self, params: &[f64], cache: &Cache, d_value: &[f64], grads: &mut [f64]) {
        let d = Array2::from_shape_vec((d_value.len(), 1), d_value.to_vec()).expect("column");
        self.layout.backward(params, cache, d.view(), grads);
    }
}
