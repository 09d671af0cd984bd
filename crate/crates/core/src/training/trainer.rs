use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{align_advantages, collect_rollouts, compute_gae, cooperative_bias, effective_env, ppo_update, streams};
use super::{Policies, PpoStats, RolloutBuffer};
use crate::config::{config_hash, Algorithm, EnvConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::metrics::{gini, market_total_wealth, summarize_run, EpisodeRecord, RunSummary};
use crate::nn::Checkpoint;
use crate::rng::rng_for;

/// One row of the training-curve stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub update: usize,
    pub env_steps: u64,
    pub seed: u64,
    pub algorithm: String,
    pub config_hash: String,
    pub alpha: f64,
    pub market_total_wealth: f64,
    pub final_mitigation: f64,
    pub climate_risk: f64,
    pub gini_capital: Option<f64>,
    pub gini_investment: Option<f64>,
    pub mean_company_return: f64,
    pub mean_investor_return: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Cooperative-bias estimate averaged over all agents.
    pub coop_bias: f64,
    pub coop_bias_company: f64,
    pub coop_bias_investor: f64,
}

/// Receives metrics rows; implementations must tolerate concurrent calls.
pub trait MetricsSink: Sync {
    fn record(&self, row: &UpdateMetrics) -> Result<()>;
}

impl MetricsSink for Mutex<Vec<UpdateMetrics>> {
    fn record(&self, row: &UpdateMetrics) -> Result<()> {
        self.lock().expect("metrics sink poisoned").push(row.clone());
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub history: Vec<UpdateMetrics>,
    pub summary: RunSummary,
    pub policies: Policies,
}

/// Collect, estimate advantages, align and update, one rollout at a time.
#[derive(Debug, Clone)]
pub struct Trainer {
    env: EnvConfig,
    train: TrainConfig,
    policies: Policies,
    update: usize,
    history: Vec<UpdateMetrics>,
    hash: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    update: usize,
    config_hash: String,
    env: EnvConfig,
    train: TrainConfig,
    actor_steps: Vec<u64>,
    critic_steps: Vec<u64>,
    history: Vec<UpdateMetrics>,
}

/// The fields a resumed run may change without invalidating its checkpoint.
fn resumable_view(train: &TrainConfig) -> TrainConfig {
    TrainConfig {
        total_steps: 0,
        checkpoint_every: 0,
        eval_episodes: 0,
        ..train.clone()
    }
}

impl Trainer {
    pub fn new(env: &EnvConfig, train: &TrainConfig) -> Result<Self> {
        env.validate()?;
        train.validate(env)?;
        let env = effective_env(env, train);
        let policies = Policies::new(&env, train)?;
        Ok(Trainer {
            hash: config_hash(&(&env, resumable_view(train))),
            env,
            train: train.clone(),
            policies,
            update: 0,
            history: Vec::new(),
        })
    }

    pub fn env_config(&self) -> &EnvConfig {
        &self.env
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.train
    }

    pub fn policies(&self) -> &Policies {
        &self.policies
    }

    pub fn history(&self) -> &[UpdateMetrics] {
        &self.history
    }

    pub fn updates_done(&self) -> usize {
        self.update
    }

    pub fn num_updates(&self) -> usize {
        self.train.num_updates(self.env.episode_length)
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn is_finished(&self) -> bool {
        self.update >= self.num_updates()
    }

    /// Rollout with advantages and (for Advantage Alignment) aligned advantages.
    pub fn prepare_batch(&self) -> Result<RolloutBuffer> {
        let t = &self.train;
        let mut buf = collect_rollouts(&self.env, &self.policies, t.num_envs, t.seed, &[self.update as u64])?;
        buf.set_learning_rewards(t.reward_scale, t.algorithm == Algorithm::SumReward);
        compute_gae(&mut buf, t.gamma, t.gae_lambda);
        if t.algorithm == Algorithm::AdAlign {
            align_advantages(&mut buf, t.aa_beta, t.aa_gamma, t.normalize_before_align);
        }
        if !buf.all_finite() {
            return Err(Error::Training {
                batch: self.update,
                reason: "non-finite advantages".into(),
            });
        }
        Ok(buf)
    }

    /// One collect/update iteration.
    pub fn step(&mut self) -> Result<UpdateMetrics> {
        let buf = self.prepare_batch()?;
        let mut rng = rng_for(self.train.seed, &[streams::SHUFFLE, self.update as u64]);
        let stats = ppo_update(&mut self.policies, &buf, &self.train, &mut rng)?;
        let row = self.metrics_row(&buf, &stats)?;
        self.update += 1;
        self.history.push(row.clone());
        Ok(row)
    }

    fn metrics_row(&self, buf: &RolloutBuffer, stats: &PpoStats) -> Result<UpdateMetrics> {
        let m = self.env.num_companies;
        let n = buf.num_envs as f64;
        let finals = &buf.final_states;
        let mean = |f: &dyn Fn(usize) -> f64| (0..buf.num_envs).map(f).sum::<f64>() / n;
        let mean_opt = |f: &dyn Fn(usize) -> Option<f64>| {
            let v: Vec<f64> = (0..buf.num_envs).filter_map(f).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        let returns = buf.episode_returns();
        let b = cooperative_bias(buf, self.train.aa_gamma);
        let avg = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
        Ok(UpdateMetrics {
            update: self.update,
            env_steps: ((self.update + 1) * buf.num_envs * buf.episode_length) as u64,
            seed: self.train.seed,
            algorithm: self.train.algorithm.name().to_string(),
            config_hash: self.hash.clone(),
            alpha: self.env.alpha,
            market_total_wealth: mean(&|e| market_total_wealth(&finals[e])),
            final_mitigation: mean(&|e| finals[e].cumulative_mitigation),
            climate_risk: mean(&|e| finals[e].total_risk),
            gini_capital: mean_opt(&|e| gini(&finals[e].company_capital).ok()),
            gini_investment: mean_opt(&|e| gini(&finals[e].cumulative_investment).ok()),
            mean_company_return: mean(&|e| avg(&returns[e][..m])),
            mean_investor_return: mean(&|e| avg(&returns[e][m..])),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            approx_kl: stats.approx_kl,
            clip_fraction: stats.clip_fraction,
            coop_bias: avg(&b),
            coop_bias_company: avg(&b[..m]),
            coop_bias_investor: avg(&b[m..]),
        })
    }

    /// Trains until the step budget is spent, streaming rows to `sink` and
    /// writing `checkpoint.bin` into `checkpoint_dir` every
    /// `checkpoint_every` updates and at the end.
    pub fn run(&mut self, sink: Option<&dyn MetricsSink>, checkpoint_dir: Option<&Path>) -> Result<()> {
        while !self.is_finished() {
            let row = self.step()?;
            if let Some(s) = sink {
                s.record(&row)?;
            }
            let every = self.train.checkpoint_every;
            if let Some(dir) = checkpoint_dir {
                if every > 0 && self.update % every == 0 && !self.is_finished() {
                    self.save(&checkpoint_path(dir))?;
                }
            }
        }
        if let Some(dir) = checkpoint_dir {
            self.save(&checkpoint_path(dir))?;
        }
        Ok(())
    }

    /// Stochastic-policy episodes on a dedicated evaluation stream.
    pub fn evaluate(&self, episodes: usize) -> Result<Vec<EpisodeRecord>> {
        if episodes == 0 {
            return Err(Error::config("train.eval_episodes", "must be at least 1"));
        }
        let buf = collect_rollouts(&self.env, &self.policies, episodes, self.train.seed, &[streams::EVAL, self.update as u64])?;
        let returns = buf.episode_returns();
        Ok(buf
            .final_states
            .into_iter()
            .zip(returns)
            .map(|(final_state, returns)| EpisodeRecord { final_state, returns })
            .collect())
    }

    pub fn summary(&self) -> Result<RunSummary> {
        let episodes = self.evaluate(self.train.eval_episodes)?;
        summarize_run(&episodes, self.train.seed, &self.hash)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::default();
        for (k, g) in self.policies.actors.iter().enumerate() {
            ck.push(format!("actor{k}.params"), &g.params);
            ck.push(format!("actor{k}.adam_m"), &g.opt.m);
            ck.push(format!("actor{k}.adam_v"), &g.opt.v);
        }
        for (k, g) in self.policies.critics.iter().enumerate() {
            ck.push(format!("critic{k}.params"), &g.params);
            ck.push(format!("critic{k}.adam_m"), &g.opt.m);
            ck.push(format!("critic{k}.adam_v"), &g.opt.v);
        }
        let meta = CheckpointMeta {
            update: self.update,
            config_hash: self.hash.clone(),
            env: self.env.clone(),
            train: self.train.clone(),
            actor_steps: self.policies.actors.iter().map(|g| g.opt.step).collect(),
            critic_steps: self.policies.critics.iter().map(|g| g.opt.step).collect(),
            history: self.history.clone(),
        };
        ck.extra = serde_json::to_value(meta)?;
        Ok(ck)
    }

    /// Rebuilds a trainer from a checkpoint written under the same configs.
    /// Only the step budget, checkpoint cadence and evaluation size may differ.
    pub fn from_checkpoint(env: &EnvConfig, train: &TrainConfig, ck: &Checkpoint) -> Result<Self> {
        let mut trainer = Trainer::new(env, train)?;
        let meta: CheckpointMeta = serde_json::from_value(ck.extra.clone())
            .map_err(|e| Error::Checkpoint(format!("bad metadata: {e}")))?;
        if meta.config_hash != trainer.hash {
            return Err(Error::Checkpoint(format!(
                "checkpoint was written for config {} but this run resolves to {}",
                meta.config_hash, trainer.hash
            )));
        }
        let load = |name: String, dst: &mut Vec<f64>| -> Result<()> {
            let src = ck.get(&name)?;
            if src.len() != dst.len() {
                return Err(Error::Checkpoint(format!("tensor `{name}` has {} values, expected {}", src.len(), dst.len())));
            }
            dst.copy_from_slice(src);
            Ok(())
        };
        for (k, g) in trainer.policies.actors.iter_mut().enumerate() {
            load(format!("actor{k}.params"), &mut g.params)?;
            load(format!("actor{k}.adam_m"), &mut g.opt.m)?;
            load(format!("actor{k}.adam_v"), &mut g.opt.v)?;
            g.opt.step = *meta.actor_steps.get(k).ok_or_else(|| Error::Checkpoint("missing actor step".into()))?;
        }
        for (k, g) in trainer.policies.critics.iter_mut().enumerate() {
            load(format!("critic{k}.params"), &mut g.params)?;
            load(format!("critic{k}.adam_m"), &mut g.opt.m)?;
            load(format!("critic{k}.adam_v"), &mut g.opt.v)?;
            g.opt.step = *meta.critic_steps.get(k).ok_or_else(|| Error::Checkpoint("missing critic step".into()))?;
        }
        trainer.update = meta.update;
        trainer.history = meta.history;
        Ok(trainer)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn resume(env: &EnvConfig, train: &TrainConfig, path: &Path) -> Result<Self> {
        Trainer::from_checkpoint(env, train, &Checkpoint::load(path)?)
    }
}

pub fn checkpoint_path(dir: &Path) -> PathBuf {
    dir.join("checkpoint.bin")
}

/// Trains from scratch and evaluates the final policies.
pub fn train(env: &EnvConfig, train: &TrainConfig, sink: Option<&dyn MetricsSink>) -> Result<TrainResult> {
    let mut trainer = Trainer::new(env, train)?;
    trainer.run(sink, None)?;
    Ok(TrainResult {
        summary: trainer.summary()?,
        history: trainer.history,
        policies: trainer.policies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (EnvConfig, TrainConfig) {
        let env = EnvConfig {
            num_companies: 2,
            num_investors: 1,
            episode_length: 10,
            ..EnvConfig::default()
        };
        let mut t = TrainConfig::ppo();
        t.num_envs = 2;
        t.minibatches = 2;
        t.epochs = 2;
        t.hidden_size = 8;
        t.total_steps = 2 * 10 * 3;
        t.eval_episodes = 2;
        (env, t)
    }

    #[test]
    fn deterministic_and_streams_rows() {
        let (env, t) = tiny();
        let sink = Mutex::new(Vec::new());
        let a = train(&env, &t, Some(&sink)).unwrap();
        let b = train(&env, &t, None).unwrap();
        assert_eq!(a.history.len(), 3);
        assert_eq!(*sink.lock().unwrap(), a.history);
        assert_eq!(a.history, b.history);
        assert_eq!(a.policies.flat_params(), b.policies.flat_params());
        assert_eq!(a.summary, b.summary);
    }

    #[test]
    fn resume_matches_uninterrupted() {
        let (env, t) = tiny();
        let full = train(&env, &t, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut first = Trainer::new(&env, &t).unwrap();
        first.step().unwrap();
        first.save(&checkpoint_path(dir.path())).unwrap();
        let mut resumed = Trainer::resume(&env, &t, &checkpoint_path(dir.path())).unwrap();
        assert_eq!(resumed.updates_done(), 1);
        resumed.run(None, None).unwrap();
        assert_eq!(resumed.history(), full.history.as_slice());
        assert_eq!(resumed.policies().flat_params(), full.policies.flat_params());
        assert_eq!(resumed.summary().unwrap(), full.summary);
    }

    #[test]
    fn resume_rejects_other_config() {
        let (env, t) = tiny();
        let trainer = Trainer::new(&env, &t).unwrap();
        let ck = trainer.to_checkpoint().unwrap();
        let mut other = t.clone();
        other.seed = 9;
        assert!(matches!(Trainer::from_checkpoint(&env, &other, &ck), Err(Error::Checkpoint(_))));
        let mut longer = t.clone();
        longer.total_steps *= 2;
        assert!(Trainer::from_checkpoint(&env, &longer, &ck).is_ok());
    }

    #[test]
    fn inconsistent_config_rejected_at_startup() {
        let (env, mut t) = tiny();
        t.algorithm = Algorithm::Mappo;
        assert!(Trainer::new(&env, &t).unwrap_err().is_config());
    }

    #[test]
    fn adalign_with_zero_beta_matches_ppo() {
        let (env, mut t) = tiny();
        t.self_play = true;
        let mut aa = t.clone();
        aa.algorithm = Algorithm::AdAlign;
        aa.aa_beta = 0.0;
        let a = train(&env, &t, None).unwrap();
        let b = train(&env, &aa, None).unwrap();
        assert_eq!(a.policies.flat_params(), b.policies.flat_params());
    }
}
