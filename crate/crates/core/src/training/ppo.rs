use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::advantage::standardize_in_place;
use super::{Policies, RolloutBuffer};
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, PolicyNet, ValueNet};
use crate::rng::SimRng;

/// Loss statistics averaged over every optimiser step of an update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub policy_grad_norm: f64,
    pub value_grad_norm: f64,
}

/// Actor loss terms for one minibatch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActorLoss {
    pub loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Loss and gradient of the clipped surrogate plus entropy bonus, averaged
/// over the rows of `obs`.
///
/// The loss is minimised: `-mean(min(r A, clip(r) A)) - c_ent * mean(H)`.
#[allow(clippy::too_many_arguments)]
pub fn actor_gradient(
    net: &PolicyNet,
    params: &[f64],
    obs: ArrayView2<f64>,
    actions: &[&[f64]],
    old_log_probs: &[f64],
    advantages: &[f64],
    clip_eps: f64,
    entropy_coef: f64,
) -> Result<(ActorLoss, Vec<f64>)> {
    let n = obs.nrows();
    let cache = net.forward_cached(params, obs)?;
    let log_std = net.log_std(params);
    let dim = net.action_dim();
    let mut d_mean = Array2::zeros((n, dim));
    let mut d_log_std = vec![0.0; dim];
    let mut out = ActorLoss::default();
    let inv_n = 1.0 / n as f64;
    for r in 0..n {
        let mean = cache.output.row(r);
        let mean = mean.as_slice().expect("contiguous row");
        let logp = net.head.log_prob(mean, log_std, actions[r]);
        let log_ratio = logp - old_log_probs[r];
        let ratio = log_ratio.exp();
        let a = advantages[r];
        let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
        out.loss -= inv_n * (ratio * a).min(clipped * a);
        let entropy = net.head.entropy(mean, log_std);
        out.entropy += inv_n * entropy;
        out.approx_kl += inv_n * ((ratio - 1.0) - log_ratio);
        if (ratio - 1.0).abs() > clip_eps {
            out.clip_fraction += 1.0;
        }
        let mut dm = vec![0.0; dim];
        let active = if a >= 0.0 { ratio <= 1.0 + clip_eps } else { ratio >= 1.0 - clip_eps };
        if active {
            net.head.log_prob_grad(mean, log_std, actions[r], -inv_n * a * ratio, &mut dm, &mut d_log_std);
        }
        net.head.entropy_grad(mean, -inv_n * entropy_coef, &mut dm, &mut d_log_std);
        d_mean.row_mut(r).assign(&ndarray::ArrayView1::from(&dm));
    }
    out.loss -= entropy_coef * out.entropy;
    out.clip_fraction *= inv_n;
    let mut grads = vec![0.0; params.len()];
    net.backward(params, &cache, d_mean.view(), &d_log_std, &mut grads);
    Ok((out, grads))
}

/// Gradient of `-mean(A * log pi(a|s))`, evaluated one sample at a time.
pub fn reinforce_gradient(
    net: &PolicyNet,
    params: &[f64],
    obs: ArrayView2<f64>,
    actions: &[&[f64]],
    advantages: &[f64],
) -> Result<Vec<f64>> {
    let n = obs.nrows();
    let mut grads = vec![0.0; params.len()];
    for r in 0..n {
        let row = obs.slice(ndarray::s![r..r + 1, ..]);
        let cache = net.forward_cached(params, row)?;
        let mean = cache.output.row(0).to_vec();
        let mut dm = vec![0.0; net.action_dim()];
        let mut dl = vec![0.0; net.action_dim()];
        net.head.log_prob_grad(&mean, net.log_std(params), actions[r], -advantages[r] / n as f64, &mut dm, &mut dl);
        let dm = Array2::from_shape_vec((1, dm.len()), dm).expect("row");
        net.backward(params, &cache, dm.view(), &dl, &mut grads);
    }
    Ok(grads)
}

/// Clipped value loss `0.5 * mean(max((V - R)^2, (V_clip - R)^2))` and its gradient.
pub fn critic_gradient(
    net: &ValueNet,
    params: &[f64],
    features: ArrayView2<f64>,
    old_values: &[f64],
    returns: &[f64],
    value_clip: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = features.nrows();
    let cache = net.forward_cached(params, features)?;
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut d_value = vec![0.0; n];
    for r in 0..n {
        let v = cache.output[[r, 0]];
        let old = old_values[r];
        let delta = (v - old).clamp(-value_clip, value_clip);
        let vc = old + delta;
        let unclipped = (v - returns[r]).powi(2);
        let clipped = (vc - returns[r]).powi(2);
        loss += 0.5 * inv_n * unclipped.max(clipped);
        d_value[r] = if unclipped >= clipped {
            inv_n * (v - returns[r])
        } else if (v - old).abs() <= value_clip {
            inv_n * (vc - returns[r])
        } else {
            0.0
        };
    }
    let mut grads = vec![0.0; params.len()];
    net.backward(params, &cache, &d_value, &mut grads);
    Ok((loss, grads))
}

/// `(env, t)` pairs of one minibatch, each expanded to the rows of `agents`.
fn rows_for(buf: &RolloutBuffer, pairs: &[(usize, usize)], agents: &[usize]) -> Vec<usize> {
    pairs
        .iter()
        .flat_map(|&(e, t)| agents.iter().map(move |&a| buf.index(e, t, a)))
        .collect()
}

/// Runs `epochs x minibatches` clipped PPO steps on every actor and critic.
///
/// Each epoch shuffles the `(env, t)` pairs; within a minibatch the groups are
/// updated in a fixed order, each with one optimiser step over all its agents.
/// Policy advantages are standardised per minibatch and group.
pub fn ppo_update(policies: &mut Policies, buf: &RolloutBuffer, train: &TrainConfig, rng: &mut SimRng) -> Result<PpoStats> {
    if buf.log_probs.len() != buf.len() || buf.num_agents != policies.num_agents() {
        return Err(Error::Shape {
            expected: policies.num_agents(),
            got: buf.num_agents,
        });
    }
    let mut pairs: Vec<(usize, usize)> = (0..buf.num_envs)
        .flat_map(|e| (0..buf.episode_length).map(move |t| (e, t)))
        .collect();
    let minibatches = train.minibatches.clamp(1, pairs.len());
    let chunk = pairs.len().div_ceil(minibatches);
    let critic_width = policies.critic_width();
    let mut stats = PpoStats::default();
    let (mut actor_steps, mut critic_steps) = (0usize, 0usize);
    let mut batch = 0usize;
    for _ in 0..train.epochs {
        pairs.shuffle(rng);
        for mb in pairs.chunks(chunk) {
            for g in &mut policies.actors {
                let rows = rows_for(buf, mb, &g.agents);
                let obs = buf.obs.select(Axis(0), &rows);
                let actions: Vec<&[f64]> = rows.iter().map(|&i| buf.actions[i].as_slice()).collect();
                let old: Vec<f64> = rows.iter().map(|&i| buf.log_probs[i]).collect();
                let mut adv: Vec<f64> = rows.iter().map(|&i| buf.policy_advantages[i]).collect();
                standardize_in_place(&mut adv);
                let (loss, mut grads) = actor_gradient(
                    &g.net,
                    &g.params,
                    obs.view(),
                    &actions,
                    &old,
                    &adv,
                    train.clip_eps,
                    train.entropy_coef,
                )?;
                if !loss.loss.is_finite() {
                    return Err(Error::Training {
                        batch,
                        reason: format!("non-finite policy loss {}", loss.loss),
                    });
                }
                stats.policy_grad_norm += clip_grad_norm(&mut grads, train.max_grad_norm);
                g.opt.step(&mut g.params, &grads, batch)?;
                g.net.clamp_log_std(&mut g.params);
                stats.policy_loss += loss.loss;
                stats.entropy += loss.entropy;
                stats.approx_kl += loss.approx_kl;
                stats.clip_fraction += loss.clip_fraction;
                actor_steps += 1;
            }
            for g in &mut policies.critics {
                let rows = rows_for(buf, mb, &g.agents);
                let features = buf.obs.select(Axis(0), &rows);
                let features = features.slice(ndarray::s![.., ..critic_width]);
                let old: Vec<f64> = rows.iter().map(|&i| buf.values[i]).collect();
                let ret: Vec<f64> = rows.iter().map(|&i| buf.returns[i]).collect();
                let (loss, mut grads) = critic_gradient(&g.net, &g.params, features, &old, &ret, train.value_clip)?;
                if !loss.is_finite() {
                    return Err(Error::Training {
                        batch,
                        reason: format!("non-finite value loss {loss}"),
                    });
                }
                stats.value_grad_norm += clip_grad_norm(&mut grads, train.max_grad_norm);
                g.opt.step(&mut g.params, &grads, batch)?;
                stats.value_loss += loss;
                critic_steps += 1;
            }
            batch += 1;
        }
    }
    let a = actor_steps.max(1) as f64;
    let c = critic_steps.max(1) as f64;
    stats.policy_loss /= a;
    stats.entropy /= a;
    stats.approx_kl /= a;
    stats.clip_fraction /= a;
    stats.policy_grad_norm /= a;
    stats.value_loss /= c;
    stats.value_grad_norm /= c;
    Ok(stats)
}
