//! Rollout collection and policy optimisation.

pub mod advantage;
pub mod buffer;
pub mod ppo;
pub mod rollout;
pub mod trainer;

pub use advantage::{align_advantages, compute_gae, cooperative_bias};
pub use buffer::RolloutBuffer;
pub use ppo::{ppo_update, reinforce_gradient, PpoStats};
pub use rollout::collect_rollouts;
pub use trainer::{checkpoint_path, train, MetricsSink, TrainResult, Trainer, UpdateMetrics};

use crate::config::{CriticInput, EnvConfig, InvestorHead, TrainConfig};
use crate::env::ObservationLayout;
use crate::error::Result;
use crate::nn::{ActionHead, Adam, PolicyNet, ValueNet};
use crate::rng::rng_for;

/// Stream identifiers mixed into the base seed.
pub(crate) mod streams {
    pub const INIT: u64 = 1;
    pub const ENV: u64 = 2;
    pub const ACTION: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const EVAL: u64 = 5;
}

/// One actor parameter set and the agents that act with it.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorGroup {
    pub net: PolicyNet,
    pub params: Vec<f64>,
    pub opt: Adam,
    pub agents: Vec<usize>,
}

/// One critic parameter set and the agents it evaluates.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticGroup {
    pub net: ValueNet,
    pub params: Vec<f64>,
    pub opt: Adam,
    pub agents: Vec<usize>,
}

/// All learnable parameters of a run, grouped per agent or per role.
#[derive(Debug, Clone, PartialEq)]
pub struct Policies {
    pub actors: Vec<ActorGroup>,
    pub critics: Vec<CriticGroup>,
    pub actor_of: Vec<usize>,
    pub critic_of: Vec<usize>,
    pub critic_input: CriticInput,
    pub layout: ObservationLayout,
}

impl Policies {
    /// Fresh parameters. With self-play, companies share one actor and one
    /// critic, and investors share another pair; otherwise every agent has its own.
    pub fn new(env: &EnvConfig, train: &TrainConfig) -> Result<Self> {
        let layout = ObservationLayout::new(env);
        let m = env.num_companies;
        let n_agents = env.num_agents();
        let mut rng = rng_for(train.seed, &[streams::INIT]);
        let company_groups: Vec<Vec<usize>> = if train.self_play {
            vec![(0..m).collect()]
        } else {
            (0..m).map(|i| vec![i]).collect()
        };
        let investor_groups: Vec<Vec<usize>> = if train.self_play {
            vec![(m..n_agents).collect()]
        } else {
            (m..n_agents).map(|j| vec![j]).collect()
        };
        let critic_width = match train.critic_input {
            CriticInput::Local => layout.len(),
            CriticInput::Global => layout.global_len(),
        };
        let investor_head = match train.investor_head {
            InvestorHead::GaussianThreshold => ActionHead::Threshold,
            InvestorHead::Bernoulli => ActionHead::Bernoulli,
        };
        let mut actors = Vec::new();
        let mut critics = Vec::new();
        let mut actor_of = vec![0; n_agents];
        let mut critic_of = vec![0; n_agents];
        let roles = company_groups
            .into_iter()
            .map(|g| (g, ActionHead::Squashed { max: env.max_mitigation }, 1, train.mitigation_bias_init))
            .chain(investor_groups.into_iter().map(|g| (g, investor_head, m, 0.0)));
        for (agents, head, dim, bias) in roles {
            let mut net = PolicyNet::new(layout.len(), train.hidden_size, dim, head);
            net.log_std_min = train.log_std_min;
            net.log_std_max = train.log_std_max;
            let params = net.init(train.log_std_init, bias, &mut rng);
            let value = ValueNet::new(critic_width, train.hidden_size);
            let vparams = value.init(&mut rng);
            for &a in &agents {
                actor_of[a] = actors.len();
                critic_of[a] = critics.len();
            }
            actors.push(ActorGroup {
                opt: Adam::new(params.len(), train.policy_lr),
                net,
                params,
                agents: agents.clone(),
            });
            critics.push(CriticGroup {
                opt: Adam::new(vparams.len(), train.value_lr),
                net: value,
                params: vparams,
                agents,
            });
        }
        Ok(Policies {
            actors,
            critics,
            actor_of,
            critic_of,
            critic_input: train.critic_input,
            layout,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.actor_of.len()
    }

    /// Number of leading observation columns the critics read.
    pub fn critic_width(&self) -> usize {
        match self.critic_input {
            CriticInput::Local => self.layout.len(),
            CriticInput::Global => self.layout.global_len(),
        }
    }

    /// Every parameter concatenated, for distance checks between runs.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for a in &self.actors {
            out.extend_from_slice(&a.params);
        }
        for c in &self.critics {
            out.extend_from_slice(&c.params);
        }
        out
    }
}

/// The env config actually used for training, after the ESG override.
pub fn effective_env(env: &EnvConfig, train: &TrainConfig) -> EnvConfig {
    let mut env = env.clone();
    if let Some(w) = train.esg_weight {
        env.esg_weights = crate::config::PerAgent::Uniform(w);
    }
    env
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grouping() {
        let env = EnvConfig::default();
        let ippo = Policies::new(&env, &TrainConfig::ppo()).unwrap();
        assert_eq!(ippo.actors.len(), 8);
        assert_eq!(ippo.actor_of, (0..8).collect::<Vec<_>>());
        let sp = Policies::new(&env, &TrainConfig::adalign()).unwrap();
        assert_eq!(sp.actors.len(), 2);
        assert_eq!(sp.actor_of, vec![0, 0, 0, 0, 0, 1, 1, 1]);
        assert_eq!(sp.actors[1].net.action_dim(), 5);
        let mappo = Policies::new(&env, &TrainConfig::mappo()).unwrap();
        assert_eq!(mappo.critic_width(), ObservationLayout::new(&env).global_len());
    }

    #[test]
    fn esg_override() {
        let mut t = TrainConfig::ppo();
        t.esg_weight = Some(10.0);
        let env = effective_env(&EnvConfig::default(), &t);
        assert_eq!(env.esg_weight(2), 10.0);
    }
}
