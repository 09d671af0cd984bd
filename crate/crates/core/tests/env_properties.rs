use investesg::config::{ClimateEvents, EventParams, PerAgent};
use investesg::env::{self, EnvState, ObservationLayout};
use investesg::metrics::market_total_wealth;
use investesg::rng::rng_for;
use investesg::{EnvConfig, Error, InvestEsgEnv, JointAction};
use proptest::prelude::*;

fn event() -> impl Strategy<Value = EventParams> {
    (0.0..0.02f64, 0.0..1e-3f64, 0.0..=1.0f64).prop_map(|(mu, lambda_tilde, p0)| EventParams { mu, lambda_tilde, p0 })
}

fn config() -> impl Strategy<Value = EnvConfig> {
    (1usize..6, 1usize..4, 1usize..40)
        .prop_flat_map(|(m, n, t)| {
            (
                Just((m, n, t)),
                (event(), event(), event()),
                prop::collection::vec(0.0..=1.0f64, m),
                prop::collection::vec(0.0..20.0f64, n),
                (0.0..500.0f64, 0.0..0.3f64, 0.01..=1.0f64, 0.0..100.0f64, 0.0..100.0f64),
            )
        })
        .prop_map(|((m, n, t), (heat, precipitation, drought), loss, esg, (alpha, growth, max_u, k0, c0))| EnvConfig {
            num_companies: m,
            num_investors: n,
            episode_length: t,
            alpha,
            events: ClimateEvents {
                heat,
                precipitation,
                drought,
            },
            loss_coefficients: PerAgent::Each(loss),
            market_growth: growth,
            max_mitigation: max_u,
            initial_company_capital: k0,
            initial_investor_cash: c0,
            esg_weights: PerAgent::Each(esg),
            ..EnvConfig::default()
        })
}

fn action(config: &EnvConfig, seed: u64, t: usize) -> JointAction {
    use rand::Rng;
    let mut rng = rng_for(seed, &[99, t as u64]);
    JointAction {
        mitigation: (0..config.num_companies).map(|_| rng.random_range(0.0..=config.max_mitigation)).collect(),
        portfolio: (0..config.num_investors)
            .map(|_| (0..config.num_companies).map(|_| rng.random_range(0..=1u8)).collect())
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn state_invariants_hold_along_episodes(config in config(), seed in 0u64..1000) {
        let layout = ObservationLayout::new(&config);
        let (mut sim, obs) = InvestEsgEnv::reset(config.clone(), seed).unwrap();
        prop_assert_eq!(obs.len(), config.num_agents());
        let mut last_u = 0.0;
        while !sim.is_done() {
            let a = action(&config, seed, sim.state().t);
            let out = sim.step(&a).unwrap();
            let s = sim.state();
            prop_assert!(s.company_capital.iter().chain(&s.investor_cash).all(|v| *v >= 0.0));
            prop_assert!(s.holdings.iter().flatten().all(|v| *v >= 0.0));
            prop_assert!(s.cumulative_mitigation >= last_u);
            last_u = s.cumulative_mitigation;
            prop_assert!(s.event_probs.iter().all(|p| (0.0..=1.0).contains(p)));
            let risk = 1.0 - s.event_probs.iter().map(|p| 1.0 - p).product::<f64>();
            prop_assert!((s.total_risk - risk).abs() < 1e-15);
            prop_assert!(s.total_risk >= config.events.risk_floor() - 1e-12);
            prop_assert_eq!(out.num_events as usize, out.events.iter().filter(|e| **e).count());
            prop_assert_eq!(out.done, s.t == config.episode_length);
            prop_assert_eq!(out.rewards.len(), config.num_agents());
            prop_assert!(out.observations.iter().all(|o| o.len() == layout.len() && o.iter().all(|v| v.is_finite())));
            for i in 0..config.num_companies {
                let held: f64 = s.holdings.iter().map(|h| h[i]).sum();
                prop_assert!(held <= s.company_capital[i] * (1.0 + 1e-12) + 1e-12);
            }
        }
        prop_assert!(sim.step(&action(&config, seed, 0)).is_err());
    }

    #[test]
    fn company_reward_is_capital_change(config in config(), seed in 0u64..1000) {
        let mut state = EnvState::initial(&config);
        let mut rng = rng_for(seed, &[]);
        let a = action(&config, seed, 0);
        let (next, out) = env::step(&config, &state, &a, &mut rng).unwrap();
        for i in 0..config.num_companies {
            prop_assert!((out.rewards[i] - (next.company_capital[i] - out.interim_capital[i])).abs() <= 1e-12 * (1.0 + next.company_capital[i]));
        }
        // With zero ESG weight an investor's reward is its change in wealth.
        let mut plain = config.clone();
        plain.esg_weights = PerAgent::Uniform(0.0);
        let mut rng = rng_for(seed, &[]);
        let (next, out) = env::step(&plain, &state, &a, &mut rng).unwrap();
        for j in 0..plain.num_investors {
            let before = state.investor_wealth(j);
            prop_assert!((out.rewards[plain.num_companies + j] - (next.investor_wealth(j) - before)).abs() <= 1e-12 * (1.0 + before));
        }
        state = next;
        prop_assert_eq!(state.t, 1);
    }

    #[test]
    fn same_seed_same_episode(config in config(), seed in 0u64..1000) {
        let run = || {
            let (mut sim, _) = InvestEsgEnv::reset(config.clone(), seed).unwrap();
            let mut rewards = Vec::new();
            while !sim.is_done() {
                rewards.push(sim.step(&action(&config, seed, sim.state().t)).unwrap().rewards);
            }
            (rewards, sim.state().clone())
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn invested_wealth_is_monotone_in_growth(seed in 0u64..1000, growth in 0.0..0.2f64) {
        // No risk: more market growth never lowers final wealth.
        let mut quiet = EnvConfig::default();
        for e in [&mut quiet.events.heat, &mut quiet.events.precipitation, &mut quiet.events.drought] {
            e.p0 = 0.0;
            e.mu = 0.0;
        }
        quiet.episode_length = 20;
        let slow = EnvConfig { market_growth: growth, ..quiet.clone() };
        let fast = EnvConfig { market_growth: growth + 0.01, ..quiet };
        let a = JointAction::uniform(&slow, 0.0);
        let w = |c: &EnvConfig| market_total_wealth(&env::simulate_fixed(c, &a, seed).unwrap());
        prop_assert!(w(&fast) > w(&slow));
    }
}

#[test]
fn invalid_config_names_the_field() {
    let mut c = EnvConfig::default();
    c.events.drought.p0 = 1.5;
    let err = InvestEsgEnv::reset(c, 0).unwrap_err();
    assert!(matches!(&err, Error::Config { field, .. } if field == "events.drought.p0"), "{err}");

    let c = EnvConfig {
        max_mitigation: 0.0,
        ..EnvConfig::default()
    };
    assert!(matches!(InvestEsgEnv::reset(c, 0), Err(Error::Config { field, .. }) if field == "max_mitigation"));
}

#[test]
fn invalid_actions_rejected() {
    let c = EnvConfig::default();
    let (mut sim, _) = InvestEsgEnv::reset(c.clone(), 0).unwrap();
    let mut a = JointAction::uniform(&c, 0.0);
    a.mitigation[2] = 1.5;
    assert!(matches!(sim.step(&a), Err(Error::Action(_))));
    let mut a = JointAction::uniform(&c, 0.0);
    a.portfolio[1][0] = 2;
    assert!(matches!(sim.step(&a), Err(Error::Action(_))));
    let mut a = JointAction::uniform(&c, 0.0);
    a.portfolio.pop();
    assert!(matches!(sim.step(&a), Err(Error::Action(_))));
    assert_eq!(sim.state().t, 0);
}

#[test]
fn reset_matches_documented_initial_state() {
    let (sim, obs) = InvestEsgEnv::reset(EnvConfig::default(), 0).unwrap();
    let s = sim.state();
    assert_eq!((s.num_companies(), s.num_investors()), (5, 3));
    assert_eq!(s.cumulative_mitigation, 0.0);
    assert_eq!(s.event_probs, [0.28, 0.13, 0.17]);
    assert!(s.holdings.iter().flatten().all(|h| *h == 0.0));
    assert_eq!(obs.len(), 8);
    assert_eq!(market_total_wealth(s), 5.0 * 30.0 + 3.0 * 30.0);
}
