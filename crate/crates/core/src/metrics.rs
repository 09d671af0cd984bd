//! Welfare and inequality metrics.

use serde::{Deserialize, Serialize};

use crate::env::EnvState;
use crate::error::{Error, Result};

/// Version of the summary CSV column layout.
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Company capital plus uninvested investor cash.
///
/// Investor holdings are claims on company capital and are already counted in
/// `company_capital`, so they are not added a second time.
pub fn market_total_wealth(state: &EnvState) -> f64 {
    state.company_capital.iter().sum::<f64>() + state.investor_cash.iter().sum::<f64>()
}

/// Gini coefficient: mean absolute difference over twice the mean.
pub fn gini(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::UndefinedInput("gini of an empty vector".into()));
    }
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::UndefinedInput("gini needs finite non-negative values".into()));
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Err(Error::UndefinedInput("gini of an all-zero vector".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i as f64 + 1.0) - n - 1.0) * x)
        .sum();
    Ok(weighted / (n * total))
}

/// Best welfare over equilibrium welfare; above 1 signals a dilemma. A value
/// below 1 means the supplied "best" was not the best observed.
pub fn empirical_price_of_anarchy(best_welfare: f64, equilibrium_welfare: f64) -> Result<f64> {
    if !(best_welfare > 0.0 && equilibrium_welfare > 0.0) {
        return Err(Error::UndefinedInput(format!(
            "price of anarchy needs positive welfare (best {best_welfare}, equilibrium {equilibrium_welfare})"
        )));
    }
    Ok(best_welfare / equilibrium_welfare)
}

/// End state and undiscounted per-agent returns of one episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub final_state: EnvState,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub config_hash: String,
    pub episodes: usize,
    pub market_total_wealth: f64,
    /// Cumulative mitigation spend `U_T`.
    pub final_mitigation: f64,
    pub final_climate_risk: f64,
    /// Gini over final company capital.
    pub gini_capital: Option<f64>,
    /// Gini over cumulative investment received per company.
    pub gini_investment: Option<f64>,
    pub agent_returns: Vec<f64>,
}

/// Averages the headline metrics over the episodes of one run.
pub fn summarize_run(episodes: &[EpisodeRecord], seed: u64, config_hash: &str) -> Result<RunSummary> {
    if episodes.is_empty() {
        return Err(Error::UndefinedInput("no episodes to summarize".into()));
    }
    let n = episodes.len() as f64;
    let mean = |f: &dyn Fn(&EpisodeRecord) -> f64| episodes.iter().map(f).sum::<f64>() / n;
    let mean_opt = |f: &dyn Fn(&EpisodeRecord) -> Option<f64>| {
        let vals: Vec<f64> = episodes.iter().filter_map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let agents = episodes[0].returns.len();
    let agent_returns = (0..agents)
        .map(|a| episodes.iter().map(|e| e.returns[a]).sum::<f64>() / n)
        .collect();
    Ok(RunSummary {
        seed,
        config_hash: config_hash.to_string(),
        episodes: episodes.len(),
        market_total_wealth: mean(&|e| market_total_wealth(&e.final_state)),
        final_mitigation: mean(&|e| e.final_state.cumulative_mitigation),
        final_climate_risk: mean(&|e| e.final_state.total_risk),
        gini_capital: mean_opt(&|e| gini(&e.final_state.company_capital).ok()),
        gini_investment: mean_opt(&|e| gini(&e.final_state.cumulative_investment).ok()),
        agent_returns,
    })
}

/// Mean and population standard deviation of a metric across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd { mean, std: var.sqrt() })
    }
}

/// Cross-seed aggregate of run summaries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub runs: usize,
    pub market_total_wealth: MeanStd,
    pub final_mitigation: MeanStd,
    pub final_climate_risk: MeanStd,
}

pub fn aggregate(summaries: &[RunSummary]) -> Result<Aggregate> {
    let pick = |f: fn(&RunSummary) -> f64| {
        MeanStd::of(&summaries.iter().map(f).collect::<Vec<_>>())
            .ok_or_else(|| Error::UndefinedInput("no runs to aggregate".into()))
    };
    Ok(Aggregate {
        runs: summaries.len(),
        market_total_wealth: pick(|s| s.market_total_wealth)?,
        final_mitigation: pick(|s| s.final_mitigation)?,
        final_climate_risk: pick(|s| s.final_climate_risk)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EnvConfig;
    use crate::env::{simulate_fixed, JointAction};
    use proptest::prelude::*;

    fn pairwise(values: &[f64]) -> f64 {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let mut diff = 0.0;
        for a in values {
            for b in values {
                diff += (a - b).abs();
            }
        }
        diff / (n * n) / (2.0 * mean)
    }

    #[test]
    fn gini_reference_values() {
        assert_eq!(gini(&[3.0; 5]).unwrap(), 0.0);
        assert!((gini(&[0.0, 0.0, 1.0, 0.0]).unwrap() - 0.75).abs() < 1e-15);
        assert!(matches!(gini(&[0.0; 3]), Err(Error::UndefinedInput(_))));
        assert!(gini(&[-1.0, 2.0]).is_err());
    }

    #[test]
    fn mtw_of_fresh_state() {
        let cfg = EnvConfig::default();
        let state = EnvState::initial(&cfg);
        assert_eq!(market_total_wealth(&state), 240.0);
        let mut zero = state.clone();
        zero.company_capital.iter_mut().for_each(|k| *k = 0.0);
        zero.investor_cash.iter_mut().for_each(|c| *c = 0.0);
        assert_eq!(market_total_wealth(&zero), 0.0);
    }

    #[test]
    fn mtw_hand_built() {
        let cfg = EnvConfig {
            num_companies: 2,
            num_investors: 2,
            ..EnvConfig::default()
        };
        let mut s = EnvState::initial(&cfg);
        s.company_capital = vec![10.0, 25.5];
        s.investor_cash = vec![4.0, 0.5];
        s.holdings = vec![vec![3.0, 0.0], vec![0.0, 7.0]];
        assert_eq!(market_total_wealth(&s), 40.0);
    }

    #[test]
    fn price_of_anarchy() {
        assert_eq!(empirical_price_of_anarchy(5.0, 5.0).unwrap(), 1.0);
        assert_eq!(empirical_price_of_anarchy(4000.0, 2000.0).unwrap(), 2.0);
        assert!(empirical_price_of_anarchy(0.0, 1.0).is_err());
        assert!(empirical_price_of_anarchy(1.0, -1.0).is_err());
    }

    #[test]
    fn summary_recomputes_fields() {
        let cfg = EnvConfig::with_alpha(70.0);
        let state = simulate_fixed(&cfg, &JointAction::uniform(&cfg, 0.005), 3).unwrap();
        let rec = EpisodeRecord {
            final_state: state.clone(),
            returns: vec![1.0; 8],
        };
        let s = summarize_run(std::slice::from_ref(&rec), 3, "abc").unwrap();
        assert_eq!(s.market_total_wealth, market_total_wealth(&state));
        assert_eq!(s.final_mitigation, state.cumulative_mitigation);
        assert_eq!(s.final_climate_risk, state.total_risk);
        assert_eq!(s.gini_capital, gini(&state.company_capital).ok());
        assert!(summarize_run(&[], 0, "x").is_err());
        assert_eq!(s, summarize_run(&[rec], 3, "abc").unwrap());
    }

    #[test]
    fn aggregate_matches_manual() {
        let mk = |w: f64| RunSummary {
            seed: 0,
            config_hash: String::new(),
            episodes: 1,
            market_total_wealth: w,
            final_mitigation: 0.0,
            final_climate_risk: 0.5,
            gini_capital: None,
            gini_investment: None,
            agent_returns: vec![],
        };
        let agg = aggregate(&[mk(1.0), mk(3.0)]).unwrap();
        assert_eq!(agg.market_total_wealth, MeanStd { mean: 2.0, std: 1.0 });
    }

    proptest! {
        #[test]
        fn gini_matches_pairwise(values in prop::collection::vec(0.0f64..100.0, 1..20)) {
            prop_assume!(values.iter().sum::<f64>() > 1e-6);
            let g = gini(&values).unwrap();
            prop_assert!((g - pairwise(&values)).abs() < 1e-9);
            let n = values.len() as f64;
            prop_assert!(g >= -1e-12 && g <= (n - 1.0) / n + 1e-12);
        }

        #[test]
        fn gini_scale_and_permutation_invariant(values in prop::collection::vec(0.0f64..100.0, 2..20), c in 0.01f64..100.0) {
            prop_assume!(values.iter().sum::<f64>() > 1e-6);
            let g = gini(&values).unwrap();
            let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
            prop_assert!((gini(&scaled).unwrap() - g).abs() < 1e-9);
            let mut rev = values.clone();
            rev.reverse();
            prop_assert!((gini(&rev).unwrap() - g).abs() < 1e-12);
        }
    }
}
