//! The climate-investment Markov game.
//!
//! Companies choose what fraction of their interim capital to spend on
//! mitigation; investors choose a binary portfolio. Each step the holdings of
//! every investor are liquidated, the freed cash is reinvested equally across
//! the selected companies, mitigation lowers the climate-event probabilities,
//! events are sampled and capital grows (or shrinks) by the profit margin.
//!
//! Agents are indexed companies first (`0..M`) and investors after
//! (`M..M+N`).

use rand::Rng;
use serde::Serialize;

use crate::config::{EnvConfig, EsgScore};
use crate::error::{Error, Result};
use crate::rng::{rng_for, SimRng};

/// Version of the observation layout produced by [`observe`].
pub const OBS_LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Company,
    Investor,
}

/// Observation layout, version [`OBS_LAYOUT_VERSION`].
///
/// Global block (shared by every agent), all currency terms divided by the
/// initial market wealth:
///
/// | range                 | content                                   |
/// |-----------------------|-------------------------------------------|
/// | `M`                   | company capital                           |
/// | `N`                   | investor cash                             |
/// | `M * N`               | holdings, investor-major                  |
/// | `1`                   | cumulative mitigation `U_t`               |
/// | `3`                   | heat, precipitation, drought probability  |
/// | `1`                   | `t / T`                                   |
/// | `M`                   | per-company lifetime mitigation spend     |
///
/// followed by a one-hot agent identity of length `M + N`. The total length is
/// `3M + 2N + MN + 5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservationLayout {
    pub num_companies: usize,
    pub num_investors: usize,
}

impl ObservationLayout {
    pub fn new(config: &EnvConfig) -> Self {
        ObservationLayout {
            num_companies: config.num_companies,
            num_investors: config.num_investors,
        }
    }

    pub fn global_len(&self) -> usize {
        let (m, n) = (self.num_companies, self.num_investors);
        2 * m + n + m * n + 5
    }

    pub fn identity_len(&self) -> usize {
        self.num_companies + self.num_investors
    }

    pub fn len(&self) -> usize {
        self.global_len() + self.identity_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mitigation_offset(&self) -> usize {
        let (m, n) = (self.num_companies, self.num_investors);
        m + n + m * n
    }

    pub fn probs_offset(&self) -> usize {
        self.mitigation_offset() + 1
    }

    pub fn time_offset(&self) -> usize {
        self.probs_offset() + 3
    }
}

/// Mutable state of one environment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvState {
    pub t: usize,
    pub company_capital: Vec<f64>,
    /// Uninvested cash held by each investor.
    pub investor_cash: Vec<f64>,
    /// `holdings[j][i]`: value of investor `j`'s stake in company `i`.
    pub holdings: Vec<Vec<f64>>,
    /// Cumulative mitigation spend across all companies, `U_t`.
    pub cumulative_mitigation: f64,
    pub event_probs: [f64; 3],
    pub total_risk: f64,
    pub cumulative_company_mitigation: Vec<f64>,
    /// Total new equity each company has received so far.
    pub cumulative_investment: Vec<f64>,
}

impl EnvState {
    pub fn initial(config: &EnvConfig) -> Self {
        let (m, n) = (config.num_companies, config.num_investors);
        let event_probs = config.events.as_array().map(|e| e.p0);
        EnvState {
            t: 0,
            company_capital: vec![config.initial_company_capital; m],
            investor_cash: vec![config.initial_investor_cash; n],
            holdings: vec![vec![0.0; m]; n],
            cumulative_mitigation: 0.0,
            total_risk: total_risk(&event_probs),
            event_probs,
            cumulative_company_mitigation: vec![0.0; m],
            cumulative_investment: vec![0.0; m],
        }
    }

    pub fn num_companies(&self) -> usize {
        self.company_capital.len()
    }

    pub fn num_investors(&self) -> usize {
        self.investor_cash.len()
    }

    /// Cash plus the value of every stake held by investor `j`.
    pub fn investor_wealth(&self, j: usize) -> f64 {
        self.investor_cash[j] + self.holdings[j].iter().sum::<f64>()
    }
}

/// Actions of every agent for one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointAction {
    /// Mitigation fraction per company, in `[0, max_mitigation]`.
    pub mitigation: Vec<f64>,
    /// `portfolio[j][i] == 1` when investor `j` invests in company `i`.
    pub portfolio: Vec<Vec<u8>>,
}

impl JointAction {
    /// Every company mitigates `rate`, every investor spreads over all companies.
    pub fn uniform(config: &EnvConfig, rate: f64) -> Self {
        JointAction {
            mitigation: vec![rate; config.num_companies],
            portfolio: vec![vec![1; config.num_companies]; config.num_investors],
        }
    }

    pub fn validate(&self, config: &EnvConfig) -> Result<()> {
        if self.mitigation.len() != config.num_companies {
            return Err(Error::Action(format!(
                "expected {} mitigation entries, got {}",
                config.num_companies,
                self.mitigation.len()
            )));
        }
        for (i, &u) in self.mitigation.iter().enumerate() {
            if !(u >= 0.0 && u <= config.max_mitigation) {
                return Err(Error::Action(format!(
                    "mitigation of company {i} = {u} outside [0, {}]",
                    config.max_mitigation
                )));
            }
        }
        if self.portfolio.len() != config.num_investors {
            return Err(Error::Action(format!(
                "expected {} portfolios, got {}",
                config.num_investors,
                self.portfolio.len()
            )));
        }
        for (j, row) in self.portfolio.iter().enumerate() {
            if row.len() != config.num_companies {
                return Err(Error::Action(format!(
                    "portfolio of investor {j} has {} entries, expected {}",
                    row.len(),
                    config.num_companies
                )));
            }
            if let Some(bad) = row.iter().find(|&&a| a > 1) {
                return Err(Error::Action(format!(
                    "portfolio of investor {j} has non-binary entry {bad}"
                )));
            }
        }
        Ok(())
    }
}

/// Result of the liquidate-and-reinvest stage of a step.
#[derive(Debug, Clone, PartialEq)]
pub struct InterimFlows {
    /// Company capital after equity flows, `K_{t+1,interim}`.
    pub capital: Vec<f64>,
    /// Investor cash after reinvestment (non-zero only for empty portfolios).
    pub investor_cash: Vec<f64>,
    /// `invested[j][i]`: new equity investor `j` put into company `i`.
    pub invested: Vec<Vec<f64>>,
}

/// Liquidates every holding back to its investor and reinvests each investor's
/// cash equally across the companies in its portfolio. An investor with an
/// empty portfolio keeps its cash.
pub fn compute_interim_capital(state: &EnvState, portfolio: &[Vec<u8>]) -> InterimFlows {
    let m = state.num_companies();
    let mut capital = state.company_capital.clone();
    let mut investor_cash = state.investor_cash.clone();
    let mut invested = vec![vec![0.0; m]; state.num_investors()];
    for (j, holdings) in state.holdings.iter().enumerate() {
        for (i, &h) in holdings.iter().enumerate() {
            capital[i] -= h;
            investor_cash[j] += h;
        }
    }
    for (j, row) in portfolio.iter().enumerate() {
        let selected = row.iter().filter(|&&a| a == 1).count();
        if selected == 0 {
            continue;
        }
        let share = investor_cash[j] / selected as f64;
        for (i, &a) in row.iter().enumerate() {
            if a == 1 {
                invested[j][i] = share;
                capital[i] += share;
            }
        }
        investor_cash[j] = 0.0;
    }
    for k in &mut capital {
        *k = k.max(0.0);
    }
    InterimFlows {
        capital,
        investor_cash,
        invested,
    }
}

/// Per-event probabilities at step `t` given cumulative mitigation, and the
/// total probability that at least one event occurs.
pub fn climate_event_probs(t: usize, cumulative_mitigation: f64, config: &EnvConfig) -> ([f64; 3], f64) {
    let lambdas = config.lambdas();
    let events = config.events.as_array();
    let mut probs = [0.0; 3];
    for e in 0..3 {
        let p = events[e].mu * t as f64 / (1.0 + lambdas[e] * cumulative_mitigation) + events[e].p0;
        probs[e] = p.clamp(0.0, 1.0);
    }
    (probs, total_risk(&probs))
}

pub fn total_risk(probs: &[f64; 3]) -> f64 {
    1.0 - probs.iter().map(|p| 1.0 - p).product::<f64>()
}

/// Independent Bernoulli draw per event; returns the indicators and their count.
pub fn sample_events<R: Rng + ?Sized>(probs: &[f64; 3], rng: &mut R) -> ([bool; 3], u8) {
    let mut hits = [false; 3];
    for (hit, &p) in hits.iter_mut().zip(probs) {
        // One uniform draw per event keeps the stream aligned across runs.
        let u: f64 = rng.random();
        *hit = u < p;
    }
    let count = hits.iter().filter(|&&h| h).count() as u8;
    (hits, count)
}

/// Everything produced by one transition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutcome {
    /// One reward per agent, companies first.
    pub rewards: Vec<f64>,
    pub events: [bool; 3],
    pub num_events: u8,
    pub observations: Vec<Vec<f64>>,
    pub done: bool,
    pub interim_capital: Vec<f64>,
    /// Mitigation spend of each company this step.
    pub mitigation_spend: Vec<f64>,
}

/// Advances `state` by one step.
pub fn step<R: Rng + ?Sized>(
    config: &EnvConfig,
    state: &EnvState,
    action: &JointAction,
    rng: &mut R,
) -> Result<(EnvState, StepOutcome)> {
    if state.t >= config.episode_length {
        return Err(Error::Action(format!(
            "episode already finished at t = {}",
            state.t
        )));
    }
    action.validate(config)?;
    let (m, n) = (config.num_companies, config.num_investors);
    let wealth_before: Vec<f64> = (0..n).map(|j| state.investor_wealth(j)).collect();

    let flows = compute_interim_capital(state, &action.portfolio);

    let mitigation_spend: Vec<f64> = (0..m).map(|i| action.mitigation[i] * flows.capital[i]).collect();
    let cumulative_mitigation = state.cumulative_mitigation + mitigation_spend.iter().sum::<f64>();

    let (event_probs, risk) = climate_event_probs(state.t, cumulative_mitigation, config);
    let (events, num_events) = sample_events(&event_probs, rng);

    let growth = 1.0 + config.market_growth;
    let mut margins = vec![0.0; m];
    let mut company_capital = vec![0.0; m];
    for i in 0..m {
        let loss_factor = (1.0 - num_events as f64 * config.loss(i)).max(0.0);
        margins[i] = ((1.0 - action.mitigation[i]) * growth * loss_factor - 1.0).max(-1.0);
        company_capital[i] = ((1.0 + margins[i]) * flows.capital[i]).max(0.0);
    }

    let holdings: Vec<Vec<f64>> = flows
        .invested
        .iter()
        .map(|row| row.iter().zip(&margins).map(|(v, r)| v * (1.0 + r)).collect())
        .collect();

    let mut cumulative_company_mitigation = state.cumulative_company_mitigation.clone();
    let mut cumulative_investment = state.cumulative_investment.clone();
    for i in 0..m {
        cumulative_company_mitigation[i] += mitigation_spend[i];
        cumulative_investment[i] += flows.invested.iter().map(|row| row[i]).sum::<f64>();
    }

    let next = EnvState {
        t: state.t + 1,
        company_capital,
        investor_cash: flows.investor_cash,
        holdings,
        cumulative_mitigation,
        event_probs,
        total_risk: risk,
        cumulative_company_mitigation,
        cumulative_investment,
    };

    let scale = wealth_scale(config);
    let mut rewards = Vec::with_capacity(m + n);
    for i in 0..m {
        rewards.push(next.company_capital[i] - flows.capital[i]);
    }
    for j in 0..n {
        let weight = config.esg_weight(j);
        let mut esg = 0.0;
        if weight > 0.0 {
            for i in 0..m {
                let capital = next.company_capital[i];
                if capital <= 0.0 {
                    continue;
                }
                let share = next.holdings[j][i] / capital;
                let spend = match config.esg_score {
                    EsgScore::CumulativeMitigation => next.cumulative_company_mitigation[i],
                    EsgScore::StepMitigation => mitigation_spend[i],
                };
                esg += share * spend / scale;
            }
        }
        rewards.push(next.investor_wealth(j) - wealth_before[j] + weight * esg);
    }

    let observations = observe(&next, config);
    let outcome = StepOutcome {
        rewards,
        events,
        num_events,
        observations,
        done: next.t == config.episode_length,
        interim_capital: flows.capital,
        mitigation_spend,
    };
    Ok((next, outcome))
}

fn wealth_scale(config: &EnvConfig) -> f64 {
    let w = config.initial_market_wealth();
    if w > 0.0 {
        w
    } else {
        1.0
    }
}

/// The global feature block shared by all agents (see [`ObservationLayout`]).
pub fn global_features(state: &EnvState, config: &EnvConfig) -> Vec<f64> {
    let layout = ObservationLayout::new(config);
    let scale = wealth_scale(config);
    let mut out = Vec::with_capacity(layout.global_len());
    out.extend(state.company_capital.iter().map(|k| k / scale));
    out.extend(state.investor_cash.iter().map(|c| c / scale));
    for row in &state.holdings {
        out.extend(row.iter().map(|h| h / scale));
    }
    out.push(state.cumulative_mitigation / scale);
    out.extend_from_slice(&state.event_probs);
    out.push(state.t as f64 / config.episode_length as f64);
    out.extend(state.cumulative_company_mitigation.iter().map(|u| u / scale));
    out
}

/// One observation per agent: the global block followed by a one-hot identity.
pub fn observe(state: &EnvState, config: &EnvConfig) -> Vec<Vec<f64>> {
    let layout = ObservationLayout::new(config);
    let global = global_features(state, config);
    (0..layout.identity_len())
        .map(|agent| {
            let mut obs = Vec::with_capacity(layout.len());
            obs.extend_from_slice(&global);
            obs.extend((0..layout.identity_len()).map(|k| if k == agent { 1.0 } else { 0.0 }));
            obs
        })
        .collect()
}

/// A seeded environment instance that owns its RNG.
#[derive(Debug, Clone)]
pub struct InvestEsgEnv {
    config: EnvConfig,
    state: EnvState,
    rng: SimRng,
}

impl InvestEsgEnv {
    pub fn reset(config: EnvConfig, seed: u64) -> Result<(Self, Vec<Vec<f64>>)> {
        config.validate()?;
        let state = EnvState::initial(&config);
        let obs = observe(&state, &config);
        let env = InvestEsgEnv {
            rng: rng_for(seed, &[0x656e76]),
            config,
            state,
        };
        Ok((env, obs))
    }

    pub fn step(&mut self, action: &JointAction) -> Result<StepOutcome> {
        let (next, outcome) = step(&self.config, &self.state, action, &mut self.rng)?;
        self.state = next;
        Ok(outcome)
    }

    pub fn observe(&self) -> Vec<Vec<f64>> {
        observe(&self.state, &self.config)
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn is_done(&self) -> bool {
        self.state.t >= self.config.episode_length
    }
}

/// Runs one full episode with the same joint action at every step and returns
/// the terminal state.
pub fn simulate_fixed(config: &EnvConfig, action: &JointAction, seed: u64) -> Result<EnvState> {
    let (mut env, _) = InvestEsgEnv::reset(config.clone(), seed)?;
    while !env.is_done() {
        env.step(action)?;
    }
    Ok(env.state)
}

/// One row of a trajectory dump: a single agent at a single step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub episode: usize,
    pub step: usize,
    pub agent: usize,
    pub role: Role,
    pub mitigation: Option<f64>,
    pub portfolio: Option<String>,
    pub reward: f64,
    /// Company capital, or investor wealth (cash plus holdings).
    pub capital: f64,
    pub cumulative_mitigation: f64,
    pub total_risk: f64,
    pub num_events: u8,
}

/// Rows for every agent after a step that produced `after`.
pub fn trajectory_rows(
    episode: usize,
    action: &JointAction,
    outcome: &StepOutcome,
    after: &EnvState,
) -> Vec<TrajectoryRow> {
    let m = after.num_companies();
    let step = after.t - 1;
    let base = |agent: usize, role: Role, capital: f64| TrajectoryRow {
        episode,
        step,
        agent,
        role,
        mitigation: None,
        portfolio: None,
        reward: outcome.rewards[agent],
        capital,
        cumulative_mitigation: after.cumulative_mitigation,
        total_risk: after.total_risk,
        num_events: outcome.num_events,
    };
    let mut rows = Vec::with_capacity(outcome.rewards.len());
    for i in 0..m {
        let mut row = base(i, Role::Company, after.company_capital[i]);
        row.mitigation = Some(action.mitigation[i]);
        rows.push(row);
    }
    for j in 0..after.num_investors() {
        let mut row = base(m + j, Role::Investor, after.investor_wealth(j));
        row.portfolio = Some(action.portfolio[j].iter().map(|a| if *a == 1 { '1' } else { '0' }).collect());
        rows.push(row);
    }
    rows
}
