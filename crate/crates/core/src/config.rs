//! Configuration for the environment, the trainer and the analyzer.
//!
//! Configs are stored as TOML with an explicit `schema_version`. Unknown keys
//! are rejected everywhere so a typo in a sweep file fails loudly instead of
//! silently falling back to a default.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version of the on-disk config schema. Bump on any breaking change.
pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Mitigation bound of the desk-scale game.
pub const DESK_MAX_MITIGATION: f64 = 0.05;

/// The three climate hazards tracked by the environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Heat,
    Precipitation,
    Drought,
}

impl EventKind {
    pub const ALL: [EventKind; 3] = [EventKind::Heat, EventKind::Precipitation, EventKind::Drought];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::Heat => "heat",
            EventKind::Precipitation => "precipitation",
            EventKind::Drought => "drought",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventParams {
    /// Linear growth of the event probability per step.
    pub mu: f64,
    /// Base responsiveness of the event probability to cumulative mitigation.
    pub lambda_tilde: f64,
    /// Event probability at step 0.
    pub p0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClimateEvents {
    pub heat: EventParams,
    pub precipitation: EventParams,
    pub drought: EventParams,
}

impl ClimateEvents {
    pub fn as_array(&self) -> [EventParams; 3] {
        [self.heat, self.precipitation, self.drought]
    }

    pub fn get(&self, kind: EventKind) -> &EventParams {
        match kind {
            EventKind::Heat => &self.heat,
            EventKind::Precipitation => &self.precipitation,
            EventKind::Drought => &self.drought,
        }
    }

    /// Lowest attainable total risk: `1 - prod(1 - p0_e)`.
    pub fn risk_floor(&self) -> f64 {
        1.0 - self.as_array().iter().map(|e| 1.0 - e.p0).product::<f64>()
    }
}

impl Default for ClimateEvents {
    fn default() -> Self {
        ClimateEvents {
            heat: EventParams {
                mu: 0.005,
                lambda_tilde: 1e-5,
                p0: 0.28,
            },
            precipitation: EventParams {
                mu: 0.003,
                lambda_tilde: 1e-5,
                p0: 0.13,
            },
            drought: EventParams {
                mu: 0.004,
                lambda_tilde: 1e-5,
                p0: 0.17,
            },
        }
    }
}

/// A per-agent coefficient given either once for every agent or as a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAgent {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerAgent {
    pub fn get(&self, index: usize) -> f64 {
        match self {
            PerAgent::Uniform(v) => *v,
            PerAgent::Each(values) => values[index],
        }
    }

    pub fn expand(&self, len: usize) -> Vec<f64> {
        (0..len).map(|i| self.get(i)).collect()
    }

    fn check(&self, field: &str, len: usize, ok: impl Fn(f64) -> bool, what: &str) -> Result<()> {
        if let PerAgent::Each(values) = self {
            if values.len() != len {
                return Err(Error::config(
                    field,
                    format!("has {} entries but {len} are required", values.len()),
                ));
            }
        }
        for i in 0..len {
            let v = self.get(i);
            if !v.is_finite() || !ok(v) {
                return Err(Error::config(format!("{field}[{i}]"), format!("= {v} must be {what}")));
            }
        }
        Ok(())
    }
}

/// How the ESG term of the investor reward is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EsgScore {
    /// Ownership share times the company's lifetime mitigation spend.
    #[default]
    CumulativeMitigation,
    /// Ownership share times the company's mitigation spend this step.
    StepMitigation,
}

/// Full parameterisation of the climate-investment Markov game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub num_companies: usize,
    pub num_investors: usize,
    pub episode_length: usize,
    /// Scaling applied to every event's mitigation responsiveness.
    pub alpha: f64,
    pub events: ClimateEvents,
    /// Fraction of growth lost per realised event, per company.
    pub loss_coefficients: PerAgent,
    /// Baseline market return per step.
    pub market_growth: f64,
    /// Upper bound on the mitigation fraction.
    pub max_mitigation: f64,
    pub initial_company_capital: f64,
    pub initial_investor_cash: f64,
    /// Investor reward-shaping weight on the ESG term (0 = status quo).
    pub esg_weights: PerAgent,
    pub esg_score: EsgScore,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            num_companies: 5,
            num_investors: 3,
            episode_length: 100,
            alpha: 1.0,
            events: ClimateEvents::default(),
            loss_coefficients: PerAgent::Uniform(0.06),
            market_growth: 0.1,
            max_mitigation: 1.0,
            initial_company_capital: 30.0,
            initial_investor_cash: 30.0,
            esg_weights: PerAgent::Uniform(0.0),
            esg_score: EsgScore::CumulativeMitigation,
        }
    }
}

impl EnvConfig {
    /// Default game with mitigation effectiveness scaled by `alpha`.
    pub fn with_alpha(alpha: f64) -> Self {
        EnvConfig {
            alpha,
            ..EnvConfig::default()
        }
    }

    /// Desk-scale game: mitigation is capped at [`DESK_MAX_MITIGATION`] so
    /// exploration around the initial policy does not wipe out capital.
    pub fn desk_scale(mut self) -> Self {
        self.max_mitigation = self.max_mitigation.min(DESK_MAX_MITIGATION);
        self
    }

    pub fn num_agents(&self) -> usize {
        self.num_companies + self.num_investors
    }

    pub fn initial_market_wealth(&self) -> f64 {
        self.num_companies as f64 * self.initial_company_capital
            + self.num_investors as f64 * self.initial_investor_cash
    }

    pub fn loss(&self, company: usize) -> f64 {
        self.loss_coefficients.get(company)
    }

    pub fn esg_weight(&self, investor: usize) -> f64 {
        self.esg_weights.get(investor)
    }

    /// Effective responsiveness `alpha * lambda_tilde` for each event.
    pub fn lambdas(&self) -> [f64; 3] {
        self.events.as_array().map(|e| self.alpha * e.lambda_tilde)
    }

    /// Same game with a different number of players while keeping the total
    /// initial company capital and investor cash unchanged.
    pub fn rescaled(&self, num_companies: usize, num_investors: usize) -> Self {
        let company_total = self.num_companies as f64 * self.initial_company_capital;
        let investor_total = self.num_investors as f64 * self.initial_investor_cash;
        let mut cfg = self.clone();
        cfg.num_companies = num_companies;
        cfg.num_investors = num_investors;
        cfg.initial_company_capital = company_total / num_companies.max(1) as f64;
        cfg.initial_investor_cash = investor_total / num_investors.max(1) as f64;
        if let PerAgent::Each(v) = &self.loss_coefficients {
            cfg.loss_coefficients = PerAgent::Uniform(v.iter().sum::<f64>() / v.len() as f64);
        }
        if let PerAgent::Each(v) = &self.esg_weights {
            cfg.esg_weights = PerAgent::Uniform(v.iter().sum::<f64>() / v.len() as f64);
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_companies == 0 {
            return Err(Error::config("num_companies", "must be at least 1"));
        }
        if self.num_investors == 0 {
            return Err(Error::config("num_investors", "must be at least 1"));
        }
        if self.episode_length == 0 {
            return Err(Error::config("episode_length", "must be at least 1"));
        }
        check_range("alpha", self.alpha, 0.0, f64::INFINITY)?;
        for kind in EventKind::ALL {
            let e = self.events.get(kind);
            let name = kind.name();
            check_range(&format!("events.{name}.p0"), e.p0, 0.0, 1.0)?;
            check_range(&format!("events.{name}.mu"), e.mu, 0.0, f64::INFINITY)?;
            check_range(&format!("events.{name}.lambda_tilde"), e.lambda_tilde, 0.0, f64::INFINITY)?;
        }
        self.loss_coefficients.check(
            "loss_coefficients",
            self.num_companies,
            |v| (0.0..=1.0).contains(&v),
            "in [0, 1]",
        )?;
        self.esg_weights
            .check("esg_weights", self.num_investors, |v| v >= 0.0, "non-negative")?;
        check_range("market_growth", self.market_growth, 0.0, f64::INFINITY)?;
        if !(self.max_mitigation > 0.0 && self.max_mitigation <= 1.0) {
            return Err(Error::config(
                "max_mitigation",
                format!("= {} must be in (0, 1]", self.max_mitigation),
            ));
        }
        check_range("initial_company_capital", self.initial_company_capital, 0.0, f64::INFINITY)?;
        check_range("initial_investor_cash", self.initial_investor_cash, 0.0, f64::INFINITY)?;
        Ok(())
    }
}

fn check_range(field: &str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value.is_nan() || value < lo || value > hi || (hi.is_infinite() && value.is_infinite()) {
        let upper = if hi.is_infinite() { "inf)".to_string() } else { format!("{hi}]") };
        return Err(Error::config(field, format!("= {value} must be in [{lo}, {upper}")));
    }
    Ok(())
}

/// Training algorithm variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Independent PPO: per-agent actors with decentralised critics.
    Ippo,
    /// PPO with a centralised critic on the global state.
    Mappo,
    /// Every agent optimises the sum of all agents' rewards.
    SumReward,
    /// PPO on Advantage-Alignment-transformed advantages.
    #[serde(rename = "adalign")]
    AdAlign,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ippo => "ippo",
            Algorithm::Mappo => "mappo",
            Algorithm::SumReward => "sum_reward",
            Algorithm::AdAlign => "adalign",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ippo" | "ppo" => Ok(Algorithm::Ippo),
            "mappo" => Ok(Algorithm::Mappo),
            "sum_reward" | "sumreward" | "sum" => Ok(Algorithm::SumReward),
            "adalign" | "ad_align" | "aa" => Ok(Algorithm::AdAlign),
            other => Err(Error::config("algorithm", format!("unknown algorithm `{other}`"))),
        }
    }
}

/// What the critic sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticInput {
    /// The agent's own observation (global block plus identity).
    Local,
    /// The global block only, shared by every agent.
    Global,
}

/// Action head used by investors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvestorHead {
    /// Gaussian relaxation, thresholded at execution.
    GaussianThreshold,
    /// Independent Bernoulli per company.
    Bernoulli,
}

/// PPO / Advantage Alignment hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub self_play: bool,
    pub critic_input: CriticInput,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub entropy_coef: f64,
    pub value_clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub max_grad_norm: f64,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub aa_beta: f64,
    pub aa_gamma: f64,
    /// Overrides every investor's ESG weight when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub esg_weight: Option<f64>,
    pub num_envs: usize,
    pub total_steps: u64,
    pub seed: u64,
    pub hidden_size: usize,
    pub log_std_init: f64,
    pub log_std_min: f64,
    pub log_std_max: f64,
    pub investor_head: InvestorHead,
    /// Initial bias of the company mitigation head, before squashing.
    pub mitigation_bias_init: f64,
    /// Multiplier applied to env rewards before learning.
    pub reward_scale: f64,
    /// Standardise each agent's advantages over the batch before alignment.
    pub normalize_before_align: bool,
    pub eval_episodes: usize,
    /// Write a checkpoint every this many updates (0 = only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::ppo()
    }
}

impl TrainConfig {
    /// Independent PPO with the published hyperparameters.
    pub fn ppo() -> Self {
        TrainConfig {
            algorithm: Algorithm::Ippo,
            self_play: false,
            critic_input: CriticInput::Local,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            entropy_coef: 0.05,
            value_clip: 10.0,
            epochs: 4,
            minibatches: 20,
            max_grad_norm: 10.0,
            policy_lr: 1e-4,
            value_lr: 1e-4,
            aa_beta: 0.2,
            aa_gamma: 0.9,
            esg_weight: None,
            num_envs: 64,
            total_steps: 70_000_000,
            seed: 0,
            hidden_size: 64,
            log_std_init: 0.0,
            log_std_min: -5.0,
            log_std_max: 2.0,
            investor_head: InvestorHead::GaussianThreshold,
            mitigation_bias_init: 0.0,
            reward_scale: 0.01,
            normalize_before_align: false,
            eval_episodes: 16,
            checkpoint_every: 0,
        }
    }

    pub fn mappo() -> Self {
        TrainConfig {
            algorithm: Algorithm::Mappo,
            critic_input: CriticInput::Global,
            ..TrainConfig::ppo()
        }
    }

    pub fn sum_reward() -> Self {
        TrainConfig {
            algorithm: Algorithm::SumReward,
            ..TrainConfig::ppo()
        }
    }

    /// Advantage Alignment with self-play and the published hyperparameters.
    pub fn adalign() -> Self {
        TrainConfig {
            algorithm: Algorithm::AdAlign,
            self_play: true,
            epochs: 1,
            ..TrainConfig::ppo()
        }
    }

    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        match algorithm {
            Algorithm::Ippo => TrainConfig::ppo(),
            Algorithm::Mappo => TrainConfig::mappo(),
            Algorithm::SumReward => TrainConfig::sum_reward(),
            Algorithm::AdAlign => TrainConfig::adalign(),
        }
    }

    /// Reduced profile for a single desktop machine: 8 environments, at most
    /// 2M steps, and step sizes that make progress within that budget.
    pub fn desk_scale(mut self) -> Self {
        self.num_envs = 8;
        self.total_steps = 2_000_000;
        self.hidden_size = 64;
        self.policy_lr = 3e-4;
        self.value_lr = 3e-4;
        self.entropy_coef = 0.01;
        self.epochs = 4;
        self.eval_episodes = 64;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_total_steps(mut self, total_steps: u64) -> Self {
        self.total_steps = total_steps;
        self
    }

    /// Number of collect/update iterations for an episode length.
    pub fn num_updates(&self, episode_length: usize) -> usize {
        let per_update = (self.num_envs * episode_length) as u64;
        (self.total_steps / per_update.max(1)) as usize
    }

    pub fn validate(&self, env: &EnvConfig) -> Result<()> {
        check_range("train.gamma", self.gamma, 0.0, 1.0)?;
        check_range("train.gae_lambda", self.gae_lambda, 0.0, 1.0)?;
        check_range("train.aa_beta", self.aa_beta, 0.0, f64::INFINITY)?;
        check_range("train.aa_gamma", self.aa_gamma, 0.0, 1.0)?;
        check_range("train.entropy_coef", self.entropy_coef, 0.0, f64::INFINITY)?;
        check_range("train.reward_scale", self.reward_scale, 0.0, f64::INFINITY)?;
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::config("train.clip_eps", "must be in (0, 1)"));
        }
        for (field, v) in [
            ("train.value_clip", self.value_clip),
            ("train.max_grad_norm", self.max_grad_norm),
            ("train.policy_lr", self.policy_lr),
            ("train.value_lr", self.value_lr),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("= {v} must be positive")));
            }
        }
        if self.log_std_min >= self.log_std_max {
            return Err(Error::config("train.log_std_min", "must be below log_std_max"));
        }
        if !(self.log_std_min..=self.log_std_max).contains(&self.log_std_init) {
            return Err(Error::config("train.log_std_init", "must lie within [log_std_min, log_std_max]"));
        }
        if let Some(w) = self.esg_weight {
            check_range("train.esg_weight", w, 0.0, f64::INFINITY)?;
        }
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be at least 1"));
        }
        if self.num_envs == 0 {
            return Err(Error::config("train.num_envs", "must be at least 1"));
        }
        if self.hidden_size == 0 {
            return Err(Error::config("train.hidden_size", "must be at least 1"));
        }
        let pairs = self.num_envs * env.episode_length;
        if self.minibatches == 0 || self.minibatches > pairs {
            return Err(Error::config(
                "train.minibatches",
                format!("must be in [1, {pairs}] (num_envs x episode_length)"),
            ));
        }
        if self.num_updates(env.episode_length) == 0 {
            return Err(Error::config(
                "train.total_steps",
                format!("is smaller than one rollout ({pairs} steps)"),
            ));
        }
        if self.algorithm == Algorithm::Mappo && self.critic_input != CriticInput::Global {
            return Err(Error::config("train.critic_input", "MAPPO requires the global critic input"));
        }
        if self.algorithm == Algorithm::AdAlign && env.num_agents() < 2 {
            return Err(Error::config(
                "train.algorithm",
                "advantage alignment needs at least two agents with their own advantages",
            ));
        }
        Ok(())
    }
}

/// Analyzer-specific settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeConfig {
    /// Step at which gradients are evaluated.
    pub step: usize,
    /// Largest lag considered by the recurrences.
    pub max_lag: usize,
    /// Grid of alpha values to classify.
    pub alphas: Vec<f64>,
    /// Use the Bernoulli approximation instead of exact enumeration.
    pub bernoulli_approximation: bool,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            step: 50,
            max_lag: 100,
            alphas: vec![0.0, 1.0, 10.0, 30.0, 50.0, 70.0, 100.0, 200.0, 500.0],
            bernoulli_approximation: false,
        }
    }
}

/// Contents of a config file. Every section is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<EnvConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "de_train")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analyze: Option<AnalyzeConfig>,
}

impl ConfigFile {
    pub fn new() -> Self {
        ConfigFile {
            schema_version: CONFIG_SCHEMA_VERSION,
            env: None,
            train: None,
            analyze: None,
        }
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })?;
        if file.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("= {} is not supported (expected {CONFIG_SCHEMA_VERSION})", file.schema_version),
            ));
        }
        if let Some(env) = &file.env {
            env.validate()?;
            if let Some(train) = &file.train {
                train.validate(env)?;
            }
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ConfigFile::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises to TOML")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}

impl Default for ConfigFile {
    fn default() -> Self {
        ConfigFile::new()
    }
}

/// Train sections are resolved against the defaults of their algorithm, so
/// `algorithm = "adalign"` alone yields the full Advantage Alignment profile.
fn de_train<'de, D>(deserializer: D) -> std::result::Result<Option<TrainConfig>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    use serde::de::Error as _;
    let table = toml::Table::deserialize(deserializer)?;
    let algorithm = match table.get("algorithm") {
        Some(v) => {
            let name = v
                .as_str()
                .ok_or_else(|| D::Error::custom("`algorithm` must be a string"))?;
            name.parse::<Algorithm>().map_err(D::Error::custom)?
        }
        None => Algorithm::Ippo,
    };
    let defaults = TrainConfig::for_algorithm(algorithm);
    let mut merged = toml::Table::try_from(&defaults).map_err(D::Error::custom)?;
    for (k, v) in table {
        merged.insert(k, v);
    }
    TrainConfig::deserialize(merged).map(Some).map_err(D::Error::custom)
}

/// Short stable hash of a serialisable config, used to tag artifacts.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("config serialises to JSON");
    // FNV-1a, 64 bit.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_risk_floor_is_048() {
        let floor = EnvConfig::default().events.risk_floor();
        assert!((floor - 0.48).abs() < 1e-3, "{floor}");
    }

    #[test]
    fn probability_out_of_range_names_field() {
        let mut cfg = EnvConfig::default();
        cfg.events.drought.p0 = 1.5;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("events.drought.p0"), "{err}");
    }

    #[test]
    fn per_agent_length_is_checked() {
        let cfg = EnvConfig {
            loss_coefficients: PerAgent::Each(vec![0.1, 0.1]),
            ..EnvConfig::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("loss_coefficients"));
    }

    #[test]
    fn max_mitigation_must_be_positive() {
        let cfg = EnvConfig {
            max_mitigation: 0.0,
            ..EnvConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn adalign_section_resolves_against_its_own_defaults() {
        let text = "schema_version = 1\n[env]\nalpha = 70.0\n[train]\nalgorithm = \"adalign\"\nseed = 3\n";
        let file = ConfigFile::parse(text, Path::new("inline")).unwrap();
        let train = file.train.unwrap();
        assert_eq!(train.algorithm, Algorithm::AdAlign);
        assert_eq!(train.epochs, 1);
        assert!(train.self_play);
        assert_eq!(train.aa_beta, 0.2);
        assert_eq!(train.aa_gamma, 0.9);
        assert_eq!(train.seed, 3);
        assert_eq!(file.env.unwrap().alpha, 70.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "schema_version = 1\n[env]\nalpah = 70.0\n";
        assert!(ConfigFile::parse(text, Path::new("inline")).is_err());
        let text = "schema_version = 1\n[train]\nlearning_rate = 0.1\n";
        assert!(ConfigFile::parse(text, Path::new("inline")).is_err());
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let text = "schema_version = 7\n";
        let err = ConfigFile::parse(text, Path::new("inline")).unwrap_err();
        assert!(err.to_string().contains("schema_version"));
    }

    #[test]
    fn config_file_round_trips() {
        let file = ConfigFile {
            schema_version: CONFIG_SCHEMA_VERSION,
            env: Some(EnvConfig::with_alpha(70.0)),
            train: Some(TrainConfig::adalign().desk_scale()),
            analyze: Some(AnalyzeConfig::default()),
        };
        let back = ConfigFile::parse(&file.to_toml(), Path::new("inline")).unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn published_hyperparameters() {
        let ppo = TrainConfig::ppo();
        assert_eq!(ppo.num_envs, 64);
        assert_eq!(ppo.total_steps, 70_000_000);
        assert_eq!((ppo.gamma, ppo.gae_lambda, ppo.clip_eps), (0.99, 0.95, 0.2));
        assert_eq!((ppo.policy_lr, ppo.value_lr, ppo.entropy_coef), (1e-4, 1e-4, 0.05));
        assert_eq!((ppo.value_clip, ppo.epochs, ppo.minibatches), (10.0, 4, 20));
        assert_eq!((ppo.max_grad_norm, ppo.hidden_size), (10.0, 64));
        assert!(!ppo.self_play);
        let aa = TrainConfig::adalign();
        assert_eq!((aa.epochs, aa.self_play, aa.aa_beta, aa.aa_gamma), (1, true, 0.2, 0.9));
    }

    #[test]
    fn rescale_preserves_totals() {
        let cfg = EnvConfig::default();
        let small = cfg.rescaled(1, 1);
        assert_eq!(small.initial_company_capital, 150.0);
        assert_eq!(small.initial_investor_cash, 90.0);
        assert_eq!(small.initial_market_wealth(), cfg.initial_market_wealth());
    }

    #[test]
    fn train_config_rejects_bad_minibatches() {
        let env = EnvConfig::default();
        let mut t = TrainConfig::ppo().desk_scale();
        t.minibatches = 0;
        assert!(t.validate(&env).is_err());
        let t = TrainConfig::ppo().desk_scale().with_total_steps(10);
        assert!(t.validate(&env).is_err());
    }
}
