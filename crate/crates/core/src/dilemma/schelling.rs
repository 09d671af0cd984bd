use serde::Serialize;

use crate::config::EnvConfig;
use crate::env::{simulate_fixed, JointAction};
use crate::error::{Error, Result};
use crate::metrics::market_total_wealth;

/// One point of a Schelling diagram: company 0 cooperates or defects while
/// `num_cooperators` other companies cooperate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchellingRow {
    pub num_cooperators: usize,
    /// Mean final market total wealth when company 0 cooperates.
    pub payoff_coop: f64,
    pub payoff_defect: f64,
    pub payoff_coop_std: f64,
    pub payoff_defect_std: f64,
    /// Mean final capital of company 0 itself.
    pub focal_capital_coop: f64,
    pub focal_capital_defect: f64,
}

fn profile(config: &EnvConfig, focal_rate: f64, others: usize, rate: f64) -> JointAction {
    let mut action = JointAction::uniform(config, 0.0);
    action.mitigation[0] = focal_rate;
    for u in action.mitigation.iter_mut().skip(1).take(others) {
        *u = rate;
    }
    action
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Monte-Carlo Schelling diagram over fixed action profiles. Investors spread
/// their wealth over every company; each profile is evaluated on the same
/// seeds so rows share their climate draws.
pub fn schelling_curve(
    config: &EnvConfig,
    cooperator_rate: f64,
    cooperator_counts: &[usize],
    seeds: &[u64],
) -> Result<Vec<SchellingRow>> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(Error::config("seeds", "must not be empty"));
    }
    if !(0.0..=config.max_mitigation).contains(&cooperator_rate) {
        return Err(Error::config("cooperator_rate", format!("must be in [0, {}]", config.max_mitigation)));
    }
    let mut rows = Vec::with_capacity(cooperator_counts.len());
    for &n in cooperator_counts {
        if n >= config.num_companies {
            return Err(Error::config(
                "cooperator_counts",
                format!("{n} other cooperators but only {} other companies", config.num_companies - 1),
            ));
        }
        let mut wealth = [Vec::new(), Vec::new()];
        let mut focal = [0.0, 0.0];
        for (slot, rate) in [cooperator_rate, 0.0].into_iter().enumerate() {
            let action = profile(config, rate, n, cooperator_rate);
            for &seed in seeds {
                let state = simulate_fixed(config, &action, seed)?;
                wealth[slot].push(market_total_wealth(&state));
                focal[slot] += state.company_capital[0] / seeds.len() as f64;
            }
        }
        let (coop, coop_std) = mean_std(&wealth[0]);
        let (defect, defect_std) = mean_std(&wealth[1]);
        rows.push(SchellingRow {
            num_cooperators: n,
            payoff_coop: coop,
            payoff_defect: defect,
            payoff_coop_std: coop_std,
            payoff_defect_std: defect_std,
            focal_capital_coop: focal[0],
            focal_capital_defect: focal[1],
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_defect_matches_plain_simulation() {
        let cfg = EnvConfig::with_alpha(70.0);
        let seeds = [1, 2, 3];
        let rows = schelling_curve(&cfg, 0.005, &[0], &seeds).unwrap();
        let plain: f64 = seeds
            .iter()
            .map(|&s| market_total_wealth(&simulate_fixed(&cfg, &JointAction::uniform(&cfg, 0.0), s).unwrap()))
            .sum::<f64>()
            / 3.0;
        assert!((rows[0].payoff_defect - plain).abs() < 1e-9 * plain);
    }

    #[test]
    fn deterministic_under_fixed_seeds() {
        let cfg = EnvConfig::with_alpha(70.0);
        let a = schelling_curve(&cfg, 0.005, &[0, 2, 4], &[5, 6]).unwrap();
        let b = schelling_curve(&cfg, 0.005, &[0, 2, 4], &[5, 6]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_many_cooperators_is_rejected() {
        let cfg = EnvConfig::default();
        assert!(schelling_curve(&cfg, 0.005, &[5], &[0]).is_err());
    }
}
