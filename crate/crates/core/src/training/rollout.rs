use ndarray::{s, Array2};
use rayon::prelude::*;

use super::{streams, Policies, RolloutBuffer};
use crate::config::EnvConfig;
use crate::env::{observe, step, EnvState, JointAction};
use crate::error::{Error, Result};
use crate::nn::Sample;
use crate::rng::{rng_for, SimRng};

struct Slot {
    state: EnvState,
    obs: Vec<Vec<f64>>,
    env_rng: SimRng,
    action_rng: SimRng,
}

/// Row of `agent` inside its group's batch for environment `env`.
fn batch_row(group_size: usize, env: usize, position: usize) -> usize {
    env * group_size + position
}

/// Runs one full episode in each of `num_envs` environments.
///
/// Environment `e` draws climate events from `rng_for(seed, [stream.., e, ENV])`
/// and actions from the matching `ACTION` stream, so results do not depend on
/// how environments are scheduled across threads.
pub fn collect_rollouts(
    env_config: &EnvConfig,
    policies: &Policies,
    num_envs: usize,
    seed: u64,
    stream: &[u64],
) -> Result<RolloutBuffer> {
    env_config.validate()?;
    if num_envs == 0 {
        return Err(Error::config("num_envs", "must be at least 1"));
    }
    let horizon = env_config.episode_length;
    let agents = policies.num_agents();
    if agents != env_config.num_agents() {
        return Err(Error::Shape {
            expected: env_config.num_agents(),
            got: agents,
        });
    }
    let obs_len = policies.layout.len();
    let m = env_config.num_companies;
    let mut position = vec![0; agents];
    for g in &policies.actors {
        for (p, &a) in g.agents.iter().enumerate() {
            position[a] = p;
        }
    }
    let mut critic_position = vec![0; agents];
    for g in &policies.critics {
        for (p, &a) in g.agents.iter().enumerate() {
            critic_position[a] = p;
        }
    }

    let mut slots: Vec<Slot> = (0..num_envs)
        .map(|e| {
            let path = |kind: u64| [stream, &[e as u64, kind]].concat();
            let state = EnvState::initial(env_config);
            Slot {
                obs: observe(&state, env_config),
                state,
                env_rng: rng_for(seed, &path(streams::ENV)),
                action_rng: rng_for(seed, &path(streams::ACTION)),
            }
        })
        .collect();

    let mut buf = RolloutBuffer::new(num_envs, horizon, agents, obs_len);
    buf.mitigation = vec![0.0; num_envs * horizon * m];
    let critic_width = policies.critic_width();

    for t in 0..horizon {
        for (e, slot) in slots.iter().enumerate() {
            for a in 0..agents {
                let idx = buf.index(e, t, a);
                buf.obs.row_mut(idx).assign(&ndarray::ArrayView1::from(&slot.obs[a]));
            }
        }
        let means: Vec<Array2<f64>> = policies
            .actors
            .iter()
            .map(|g| {
                let mut x = Array2::zeros((num_envs * g.agents.len(), obs_len));
                for (e, slot) in slots.iter().enumerate() {
                    for (p, &a) in g.agents.iter().enumerate() {
                        x.row_mut(batch_row(g.agents.len(), e, p))
                            .assign(&ndarray::ArrayView1::from(&slot.obs[a]));
                    }
                }
                g.net.forward(&g.params, x.view())
            })
            .collect::<Result<_>>()?;
        for g in &policies.critics {
            let mut x = Array2::zeros((num_envs * g.agents.len(), critic_width));
            for (e, slot) in slots.iter().enumerate() {
                for (p, &a) in g.agents.iter().enumerate() {
                    x.row_mut(batch_row(g.agents.len(), e, p))
                        .assign(&ndarray::ArrayView1::from(&slot.obs[a][..critic_width]));
                }
            }
            let v = g.net.forward(&g.params, x.view())?;
            for e in 0..num_envs {
                for &a in &g.agents {
                    let idx = buf.index(e, t, a);
                    buf.values[idx] = v[batch_row(g.agents.len(), e, critic_position[a])];
                }
            }
        }

        let stepped: Vec<(Vec<Sample>, Vec<f64>, Vec<f64>)> = slots
            .par_iter_mut()
            .enumerate()
            .map(|(e, slot)| {
                let samples: Vec<Sample> = (0..agents)
                    .map(|a| {
                        let g = &policies.actors[policies.actor_of[a]];
                        let row = batch_row(g.agents.len(), e, position[a]);
                        let mean = means[policies.actor_of[a]].slice(s![row, ..]);
                        g.net.head.sample(
                            mean.as_slice().expect("contiguous row"),
                            g.net.log_std(&g.params),
                            &mut slot.action_rng,
                        )
                    })
                    .collect();
                let action = JointAction {
                    mitigation: samples[..m].iter().map(|s| s.action[0]).collect(),
                    portfolio: samples[m..]
                        .iter()
                        .map(|s| s.action.iter().map(|&v| v as u8).collect())
                        .collect(),
                };
                let (next, outcome) = step(env_config, &slot.state, &action, &mut slot.env_rng)
                    .map_err(|err| Error::Rollout {
                        env: e,
                        source: Box::new(err),
                    })?;
                slot.state = next;
                slot.obs = outcome.observations;
                Ok((samples, outcome.rewards, action.mitigation))
            })
            .collect::<Result<_>>()?;

        for (e, (samples, rewards, mitigation)) in stepped.into_iter().enumerate() {
            for (a, sample) in samples.into_iter().enumerate() {
                let idx = buf.index(e, t, a);
                buf.log_probs[idx] = sample.log_prob_raw;
                buf.actions[idx] = sample.raw;
                buf.env_rewards[idx] = rewards[a];
                buf.rewards[idx] = rewards[a];
                buf.dones[idx] = t + 1 == horizon;
            }
            let base = (e * horizon + t) * m;
            buf.mitigation[base..base + m].copy_from_slice(&mitigation);
        }
    }
    buf.final_states = slots.into_iter().map(|s| s.state).collect();
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{PerAgent, TrainConfig};

    /// Policies whose every output is fixed by the output bias.
    fn constant_policies(env: &EnvConfig, company_bias: f64, investor_bias: f64) -> Policies {
        let mut p = Policies::new(env, &TrainConfig::ppo()).unwrap();
        for g in &mut p.actors {
            let n = g.net.layout.num_params();
            let dim = g.net.action_dim();
            let bias = if g.agents[0] < env.num_companies { company_bias } else { investor_bias };
            g.params.iter_mut().for_each(|v| *v = 0.0);
            g.params[n - dim..n].iter_mut().for_each(|v| *v = bias);
            g.params[n..].iter_mut().for_each(|v| *v = -5.0);
        }
        p
    }

    #[test]
    fn no_risk_zero_mitigation_grows_at_market_rate() {
        let mut env = EnvConfig {
            episode_length: 10,
            loss_coefficients: PerAgent::Uniform(0.0),
            ..EnvConfig::default()
        };
        env.events.heat.p0 = 0.0;
        let p = constant_policies(&env, -40.0, 40.0);
        let buf = collect_rollouts(&env, &p, 1, 0, &[]).unwrap();
        let w0 = env.initial_market_wealth();
        let final_state = &buf.final_states[0];
        let total: f64 = final_state.company_capital.iter().sum::<f64>() + final_state.investor_cash.iter().sum::<f64>();
        assert!((total - w0 * 1.1f64.powi(10)).abs() < 1e-9 * total);
        // Company reward is market growth on interim capital.
        let first = buf.env_rewards[buf.index(0, 0, 0)];
        assert!((first - 0.1 * (30.0 + 3.0 * 30.0 / 5.0)).abs() < 1e-12);
        assert_eq!(final_state.cumulative_mitigation, 0.0);
    }

    #[test]
    fn same_seed_same_buffer() {
        let env = EnvConfig {
            episode_length: 12,
            ..EnvConfig::default()
        };
        let p = Policies::new(&env, &TrainConfig::ppo()).unwrap();
        let a = collect_rollouts(&env, &p, 3, 7, &[1]).unwrap();
        let b = collect_rollouts(&env, &p, 3, 7, &[1]).unwrap();
        assert_eq!(a, b);
        let c = collect_rollouts(&env, &p, 3, 8, &[1]).unwrap();
        assert_ne!(a.env_rewards, c.env_rewards);
    }

    #[test]
    fn documented_shape() {
        let env = EnvConfig::default();
        let p = Policies::new(&env, &TrainConfig::adalign()).unwrap();
        let buf = collect_rollouts(&env, &p, 64, 0, &[]).unwrap();
        assert_eq!(buf.shape(), (64, 100, 8));
        assert_eq!(buf.len(), 64 * 100 * 8);
        assert_eq!(buf.obs.ncols(), 41);
        assert!(buf.dones[buf.index(5, 99, 3)] && !buf.dones[buf.index(5, 98, 3)]);
    }
}
