use ndarray::Array2;

use crate::env::EnvState;

/// Trajectories of every agent in every environment for one update.
///
/// Per-sample vectors are indexed by `(env * T + t) * A + agent`; see
/// [`RolloutBuffer::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub num_envs: usize,
    pub episode_length: usize,
    pub num_agents: usize,
    pub obs: Array2<f64>,
    /// Raw head samples (pre-squash Gaussian draws or Bernoulli outcomes).
    pub actions: Vec<Vec<f64>>,
    /// Log-probability of the raw sample under the behaviour policy.
    pub log_probs: Vec<f64>,
    /// Unmodified environment rewards.
    pub env_rewards: Vec<f64>,
    /// Learning signal: scaled and, for summed-reward training, shared.
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Advantages fed to the policy loss (aligned for Advantage Alignment).
    pub policy_advantages: Vec<f64>,
    /// Executed mitigation fraction per (env, t, company).
    pub mitigation: Vec<f64>,
    pub final_states: Vec<EnvState>,
}

impl RolloutBuffer {
    pub fn new(num_envs: usize, episode_length: usize, num_agents: usize, obs_len: usize) -> Self {
        let n = num_envs * episode_length * num_agents;
        RolloutBuffer {
            num_envs,
            episode_length,
            num_agents,
            obs: Array2::zeros((n, obs_len)),
            actions: vec![Vec::new(); n],
            log_probs: vec![0.0; n],
            env_rewards: vec![0.0; n],
            rewards: vec![0.0; n],
            values: vec![0.0; n],
            dones: vec![false; n],
            advantages: vec![0.0; n],
            returns: vec![0.0; n],
            policy_advantages: vec![0.0; n],
            mitigation: Vec::new(),
            final_states: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn index(&self, env: usize, t: usize, agent: usize) -> usize {
        (env * self.episode_length + t) * self.num_agents + agent
    }

    /// `(num_envs, episode_length, num_agents)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.num_envs, self.episode_length, self.num_agents)
    }

    /// Scales rewards and optionally replaces each with the sum over agents.
    pub fn set_learning_rewards(&mut self, scale: f64, sum_over_agents: bool) {
        let a = self.num_agents;
        for (chunk, out) in self.env_rewards.chunks(a).zip(self.rewards.chunks_mut(a)) {
            if sum_over_agents {
                let total: f64 = chunk.iter().sum();
                out.iter_mut().for_each(|r| *r = scale * total);
            } else {
                out.iter_mut().zip(chunk).for_each(|(r, e)| *r = scale * e);
            }
        }
    }

    /// One agent's sequence of a per-sample field in one environment.
    pub fn trajectory(&self, field: &[f64], env: usize, agent: usize) -> Vec<f64> {
        (0..self.episode_length).map(|t| field[self.index(env, t, agent)]).collect()
    }

    /// Undiscounted environment return per (env, agent).
    pub fn episode_returns(&self) -> Vec<Vec<f64>> {
        (0..self.num_envs)
            .map(|e| (0..self.num_agents).map(|a| self.trajectory(&self.env_rewards, e, a).iter().sum()).collect())
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.advantages.iter().chain(&self.returns).chain(&self.policy_advantages).all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learning_rewards() {
        let mut b = RolloutBuffer::new(1, 2, 3, 1);
        b.env_rewards = vec![1.0, 2.0, 3.0, 0.0, -1.0, 4.0];
        b.set_learning_rewards(0.5, false);
        assert_eq!(b.rewards, vec![0.5, 1.0, 1.5, 0.0, -0.5, 2.0]);
        b.set_learning_rewards(1.0, true);
        assert_eq!(b.rewards, vec![6.0, 6.0, 6.0, 3.0, 3.0, 3.0]);
        assert_eq!(b.episode_returns(), vec![vec![1.0, 1.0, 7.0]]);
    }
}
