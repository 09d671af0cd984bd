//! Private and social marginal gradients of expected company capital with
//! respect to mitigation, in a simplified world with static single-company
//! portfolios and no mitigation before the step of interest.
//!
//! The capital path before `t` is the expected path: capital grows by
//! `(1 + gamma) * E[max(0, 1 - X L)]` per step. Derivatives with respect to
//! `u_{t-k}^i` are propagated forward from `t - k` to `t + 1` in tangent mode,
//! so the multi-lag recurrences and the single-step formula share one code path.

mod schelling;
mod threshold;

pub use schelling::{schelling_curve, SchellingRow};
pub use threshold::{classify_zone, signflip_lambda, ThresholdResult, Zone};

use serde::{Deserialize, Serialize};

use crate::config::EnvConfig;
use crate::error::{Error, Result};

/// How the expectation over the number of climate events is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectationMode {
    /// Enumerate the eight joint event outcomes.
    #[default]
    Exact,
    /// Treat `X_t` as a single Bernoulli draw with probability `min(1, sum_e P_e)`.
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedWorld {
    /// Company capital `K_t` at the current step.
    pub capital: Vec<f64>,
    pub loss: Vec<f64>,
    pub mu: [f64; 3],
    /// Per-event responsiveness weights; `lambda_e = lambda * lambda_weights[e]`.
    pub lambda_weights: [f64; 3],
    pub p0: [f64; 3],
    pub lambda: f64,
    pub market_growth: f64,
    /// Current step.
    pub t: usize,
    /// Candidate mitigation fraction of each company at step `t`.
    pub mitigation: Vec<f64>,
    /// Largest lag considered by threshold searches.
    pub max_lag: usize,
    pub mode: ExpectationMode,
}

impl SimplifiedWorld {
    /// Simplified world matching `config` at step `t`.
    ///
    /// All investor cash is assumed invested and spread evenly, so each company
    /// starts with an equal share of the initial market wealth; that capital is
    /// then carried to step `t` along the no-mitigation expected path. `lambda`
    /// is expressed in units of `alpha`.
    pub fn from_env(config: &EnvConfig, t: usize) -> Result<Self> {
        config.validate()?;
        let m = config.num_companies;
        let events = config.events.as_array();
        let mut world = SimplifiedWorld {
            capital: vec![config.initial_market_wealth() / m as f64; m],
            loss: (0..m).map(|i| config.loss(i)).collect(),
            mu: events.map(|e| e.mu),
            lambda_weights: events.map(|e| e.lambda_tilde),
            p0: events.map(|e| e.p0),
            lambda: config.alpha,
            market_growth: config.market_growth,
            t: 0,
            mitigation: vec![0.0; m],
            max_lag: config.episode_length,
            mode: ExpectationMode::Exact,
        };
        for s in 0..t {
            for i in 0..m {
                let (e, _) = world.loss_moments(s, 0.0, i);
                world.capital[i] *= (1.0 + world.market_growth) * e;
            }
        }
        world.t = t;
        Ok(world)
    }

    pub fn num_companies(&self) -> usize {
        self.capital.len()
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        SimplifiedWorld {
            lambda,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.capital.len();
        if m == 0 {
            return Err(Error::Domain("world has no companies".into()));
        }
        if self.loss.len() != m || self.mitigation.len() != m {
            return Err(Error::Domain(format!(
                "capital, loss and mitigation lengths differ ({m}, {}, {})",
                self.loss.len(),
                self.mitigation.len()
            )));
        }
        let ok = self.capital.iter().all(|k| k.is_finite() && *k >= 0.0)
            && self.loss.iter().all(|l| (0.0..=1.0).contains(l))
            && self.mitigation.iter().all(|u| (0.0..1.0).contains(u))
            && self.p0.iter().all(|p| (0.0..=1.0).contains(p))
            && self.mu.iter().all(|v| v.is_finite() && *v >= 0.0)
            && self.lambda_weights.iter().all(|v| v.is_finite() && *v >= 0.0)
            && self.lambda.is_finite()
            && self.lambda >= 0.0
            && self.market_growth.is_finite()
            && self.market_growth >= 0.0;
        if !ok {
            return Err(Error::Domain("world parameters outside their valid ranges".into()));
        }
        Ok(())
    }

    fn lambdas(&self) -> [f64; 3] {
        self.lambda_weights.map(|w| self.lambda * w)
    }

    /// Per-event probabilities at step `s` and their derivatives in `U`.
    pub fn event_probs(&self, s: usize, cumulative_mitigation: f64) -> ([f64; 3], [f64; 3]) {
        let lambdas = self.lambdas();
        let mut p = [0.0; 3];
        let mut dp = [0.0; 3];
        for e in 0..3 {
            let denom = 1.0 + lambdas[e] * cumulative_mitigation;
            let raw = self.mu[e] * s as f64 / denom + self.p0[e];
            if raw < 1.0 {
                p[e] = raw;
                dp[e] = -lambdas[e] * self.mu[e] * s as f64 / (denom * denom);
            } else {
                p[e] = 1.0;
            }
        }
        (p, dp)
    }

    /// `E[max(0, 1 - X L_l)]` at step `s` and its derivative in `U`.
    pub fn loss_moments(&self, s: usize, cumulative_mitigation: f64, company: usize) -> (f64, f64) {
        let loss = self.loss[company];
        let (p, dp) = self.event_probs(s, cumulative_mitigation);
        match self.mode {
            ExpectationMode::Exact => {
                let mut value = 0.0;
                let mut deriv = 0.0;
                for outcome in 0..8u32 {
                    let hits = outcome.count_ones() as f64;
                    let f = (1.0 - hits * loss).max(0.0);
                    let mut prob = 1.0;
                    let mut dprob = 0.0;
                    for e in 0..3 {
                        let hit = outcome >> e & 1 == 1;
                        let (q, dq) = if hit { (p[e], dp[e]) } else { (1.0 - p[e], -dp[e]) };
                        dprob = dprob * q + prob * dq;
                        prob *= q;
                    }
                    value += prob * f;
                    deriv += dprob * f;
                }
                (value, deriv)
            }
            ExpectationMode::Bernoulli => {
                let total: f64 = p.iter().sum();
                let (total, dtotal) = if total < 1.0 { (total, dp.iter().sum()) } else { (1.0, 0.0) };
                let f1 = (1.0 - loss).max(0.0);
                (1.0 - total + total * f1, (f1 - 1.0) * dtotal)
            }
        }
    }

    /// `E[K_{t+1}^l]` for every company under the candidate mitigation.
    pub fn expected_next_capital(&self) -> Vec<f64> {
        let u_total = self.step_mitigation();
        (0..self.num_companies())
            .map(|l| {
                let (e, _) = self.loss_moments(self.t, u_total, l);
                (1.0 - self.mitigation[l]) * (1.0 + self.market_growth) * e * self.capital[l]
            })
            .collect()
    }

    fn step_mitigation(&self) -> f64 {
        self.mitigation.iter().zip(&self.capital).map(|(u, k)| u * k).sum()
    }

    /// Expected capital on the no-mitigation path at steps `t - k ..= t`.
    fn back_path(&self, k: usize) -> Result<Vec<Vec<f64>>> {
        let m = self.num_companies();
        let mut path = vec![vec![0.0; m]; k + 1];
        path[k] = self.capital.clone();
        for idx in (0..k).rev() {
            let s = self.t - k + idx;
            for l in 0..m {
                let (e, _) = self.loss_moments(s, 0.0, l);
                let g = (1.0 + self.market_growth) * e;
                path[idx][l] = if path[idx + 1][l] == 0.0 {
                    0.0
                } else if g > 0.0 {
                    path[idx + 1][l] / g
                } else {
                    return Err(Error::Domain(format!(
                        "company {l} cannot hold capital after step {s} with zero expected growth"
                    )));
                };
            }
        }
        Ok(path)
    }

    /// `d E[K_{t+1}^l] / d u_{t-k}^i` for every company `l`.
    pub fn capital_sensitivities(&self, company: usize, lag: usize) -> Result<Vec<f64>> {
        self.validate()?;
        let m = self.num_companies();
        if company >= m {
            return Err(Error::Domain(format!("company {company} out of range (M = {m})")));
        }
        if lag > self.t {
            return Err(Error::Domain(format!("lag {lag} exceeds the current step {}", self.t)));
        }
        let path = self.back_path(lag)?;
        let start = self.t - lag;
        let growth = 1.0 + self.market_growth;
        let seed = path[0][company];
        let mut dk = vec![0.0; m];
        for (idx, capital) in path.iter().enumerate() {
            let s = start + idx;
            let current = s == self.t;
            let (u_total, du) = if current {
                let u_total: f64 = self.mitigation.iter().zip(capital).map(|(u, k)| u * k).sum();
                let du: f64 = self.mitigation.iter().zip(&dk).map(|(u, d)| u * d).sum();
                (u_total, seed + du)
            } else {
                (0.0, seed)
            };
            let mut next = vec![0.0; m];
            for l in 0..m {
                let u = if current { self.mitigation[l] } else { 0.0 };
                let (e, de) = self.loss_moments(s, u_total, l);
                let g = (1.0 - u) * growth * e;
                let mut dg = (1.0 - u) * growth * de * du;
                if l == company && idx == 0 {
                    dg -= growth * e;
                }
                next[l] = dg * capital[l] + g * dk[l];
            }
            dk = next;
        }
        Ok(dk)
    }
}

/// `d E[K_{t+1}^i] / d u_{t-k}^i`.
pub fn private_gradient(world: &SimplifiedWorld, company: usize, lag: usize) -> Result<f64> {
    Ok(world.capital_sensitivities(company, lag)?[company])
}

/// `d E[K_{t+1}^j] / d u_t^i` for `j != i`.
pub fn cross_gradient(world: &SimplifiedWorld, company: usize, other: usize) -> Result<f64> {
    if company == other {
        return Err(Error::Domain(
            "cross gradient needs two distinct companies; use private_gradient".into(),
        ));
    }
    if other >= world.num_companies() {
        return Err(Error::Domain(format!("company {other} out of range")));
    }
    Ok(world.capital_sensitivities(company, 0)?[other])
}

/// `d E[sum_l K_{t+1}^l] / d u_{t-k}^i`.
pub fn social_gradient(world: &SimplifiedWorld, company: usize, lag: usize) -> Result<f64> {
    Ok(world.capital_sensitivities(company, lag)?.iter().sum())
}

/// `d E[sum_l w_l K_{t+1}^l] / d u_{t-k}^i`.
pub fn weighted_social_gradient(world: &SimplifiedWorld, company: usize, lag: usize, weights: &[f64]) -> Result<f64> {
    if weights.len() != world.num_companies() {
        return Err(Error::Shape {
            expected: world.num_companies(),
            got: weights.len(),
        });
    }
    let sens = world.capital_sensitivities(company, lag)?;
    Ok(sens.iter().zip(weights).map(|(d, w)| d * w).sum())
}

/// Gradients of one company's mitigation at every lag up to `max_lag`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientReport {
    pub company: usize,
    pub lambda: f64,
    /// Indexed by lag `k`.
    pub private: Vec<f64>,
    pub social: Vec<f64>,
    /// `cross[j]` at lag 0; the entry for `company` itself is 0.
    pub cross: Vec<f64>,
}

pub fn gradient_report(world: &SimplifiedWorld, company: usize, max_lag: usize) -> Result<GradientReport> {
    let lags = max_lag.min(world.t);
    let mut private = Vec::with_capacity(lags + 1);
    let mut social = Vec::with_capacity(lags + 1);
    let mut cross = Vec::new();
    for k in 0..=lags {
        let sens = world.capital_sensitivities(company, k)?;
        private.push(sens[company]);
        social.push(sens.iter().sum());
        if k == 0 {
            cross = sens.iter().enumerate().map(|(j, d)| if j == company { 0.0 } else { *d }).collect();
        }
    }
    Ok(GradientReport {
        company,
        lambda: world.lambda,
        private,
        social,
        cross,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(m: usize, t: usize, lambda: f64) -> SimplifiedWorld {
        SimplifiedWorld {
            capital: (0..m).map(|i| 40.0 + 5.0 * i as f64).collect(),
            loss: vec![0.1; m],
            mu: [0.005, 0.003, 0.004],
            lambda_weights: [1.0, 1.0, 1.0],
            p0: [0.28, 0.13, 0.17],
            lambda,
            market_growth: 0.1,
            t,
            mitigation: vec![0.0; m],
            max_lag: 100,
            mode: ExpectationMode::Exact,
        }
    }

    #[test]
    fn zero_lambda_private_is_minus_expected_capital() {
        let mut w = world(3, 20, 0.0);
        w.mitigation = vec![0.1, 0.0, 0.2];
        let next = w.expected_next_capital();
        for i in 0..3 {
            let g = private_gradient(&w, i, 0).unwrap();
            assert!((g + next[i] / (1.0 - w.mitigation[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn step_zero_is_negative() {
        let w = world(2, 0, 5.0);
        assert!(private_gradient(&w, 0, 0).unwrap() < 0.0);
        assert_eq!(cross_gradient(&w, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn lag_beyond_step_is_rejected() {
        let w = world(2, 3, 1.0);
        assert!(private_gradient(&w, 0, 3).is_ok());
        assert!(matches!(private_gradient(&w, 0, 4), Err(Error::Domain(_))));
    }

    #[test]
    fn cross_rejects_same_company() {
        let w = world(2, 3, 1.0);
        assert!(cross_gradient(&w, 1, 1).is_err());
    }

    #[test]
    fn cross_is_symmetric_for_symmetric_world() {
        let mut w = world(2, 30, 1e-3);
        w.capital = vec![50.0, 50.0];
        let a = cross_gradient(&w, 0, 1).unwrap();
        let b = cross_gradient(&w, 1, 0).unwrap();
        assert!(a > 0.0);
        assert!((a - b).abs() <= 1e-15 * a.abs());
    }

    #[test]
    fn single_company_social_equals_private() {
        let w = world(1, 30, 1e-3);
        for k in [0, 3, 10] {
            assert_eq!(social_gradient(&w, 0, k).unwrap(), private_gradient(&w, 0, k).unwrap());
        }
    }

    #[test]
    fn modes_agree_when_losses_stay_linear() {
        let w = world(3, 30, 1e-3);
        let mut b = w.clone();
        b.mode = ExpectationMode::Bernoulli;
        for k in [0, 5] {
            let exact = private_gradient(&w, 1, k).unwrap();
            let approx = private_gradient(&b, 1, k).unwrap();
            assert!((exact - approx).abs() < 1e-9 * exact.abs());
        }
    }

    #[test]
    fn report_has_all_lags() {
        let w = world(3, 6, 1e-3);
        let r = gradient_report(&w, 1, 100).unwrap();
        assert_eq!(r.private.len(), 7);
        assert_eq!(r.cross[1], 0.0);
        assert!(r.cross[0] > 0.0 && r.cross[2] > 0.0);
    }

    #[test]
    fn from_env_matches_expected_path() {
        let cfg = EnvConfig::with_alpha(70.0);
        let w = SimplifiedWorld::from_env(&cfg, 0).unwrap();
        assert_eq!(w.capital, vec![48.0; 5]);
        let w1 = SimplifiedWorld::from_env(&cfg, 1).unwrap();
        let expected = 48.0 * 1.1 * (1.0 - 0.06 * (0.28 + 0.13 + 0.17));
        assert!((w1.capital[0] - expected).abs() < 1e-12);
    }
}
