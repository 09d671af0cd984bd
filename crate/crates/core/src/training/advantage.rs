use super::RolloutBuffer;

/// GAE over one complete episode, bootstrapping 0 after the last step.
///
/// Returns `(advantages, returns)` with `returns = advantages + values`.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Fills `advantages` and `returns` from `rewards` and `values`, and resets
/// `policy_advantages` to the plain advantages.
pub fn compute_gae(buf: &mut RolloutBuffer, gamma: f64, lambda: f64) {
    for e in 0..buf.num_envs {
        for a in 0..buf.num_agents {
            let rewards = buf.trajectory(&buf.rewards, e, a);
            let values = buf.trajectory(&buf.values, e, a);
            let (adv, ret) = gae(&rewards, &values, gamma, lambda);
            for t in 0..buf.episode_length {
                let idx = buf.index(e, t, a);
                buf.advantages[idx] = adv[t];
                buf.returns[idx] = ret[t];
            }
        }
    }
    buf.policy_advantages.clone_from(&buf.advantages);
}

/// `S(t) = sum_{k<t} gamma^(t-k) A(k)`, with `S(0) = 0`.
pub fn discounted_past_sums(adv: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(adv.len());
    let mut s = 0.0;
    for a in adv {
        out.push(s);
        s = gamma * (s + a);
    }
    out
}

/// Aligned advantages for one environment.
///
/// `adv[a][t]` holds agent `a`'s advantage at step `t`. `shaping` is the
/// copy used inside the alignment product (it may be standardised).
pub fn align_trajectory(adv: &[Vec<f64>], shaping: &[Vec<f64>], beta: f64, gamma: f64) -> Vec<Vec<f64>> {
    let horizon = adv.first().map_or(0, Vec::len);
    let past: Vec<Vec<f64>> = shaping.iter().map(|a| discounted_past_sums(a, gamma)).collect();
    let totals: Vec<f64> = (0..horizon).map(|t| shaping.iter().map(|a| a[t]).sum()).collect();
    adv.iter()
        .enumerate()
        .map(|(i, own)| {
            (0..horizon)
                .map(|t| {
                    let others = totals[t] - shaping[i][t];
                    own[t] + beta * gamma * past[i][t] * others
                })
                .collect()
        })
        .collect()
}

fn standardize(values: &mut [f64]) {
    let n = values.len() as f64;
    if n == 0.0 {
        return;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    values.iter_mut().for_each(|v| *v = (*v - mean) / std);
}

/// Writes `A*_i(t) = A_i(t) + beta * gamma * S_i(t) * sum_{j != i} A_j(t)`
/// into `policy_advantages`.
///
/// With `normalize_first`, each agent's advantages are standardised over the
/// whole batch before entering the product; the leading `A_i(t)` term is left
/// untouched, so `beta = 0` is an exact identity either way.
pub fn align_advantages(buf: &mut RolloutBuffer, beta: f64, gamma: f64, normalize_first: bool) {
    let agents = buf.num_agents;
    let mut shaping: Vec<Vec<f64>> = (0..agents)
        .map(|a| (0..buf.num_envs).flat_map(|e| buf.trajectory(&buf.advantages, e, a)).collect())
        .collect();
    if normalize_first {
        shaping.iter_mut().for_each(|s| standardize(s));
    }
    let horizon = buf.episode_length;
    for e in 0..buf.num_envs {
        let adv: Vec<Vec<f64>> = (0..agents).map(|a| buf.trajectory(&buf.advantages, e, a)).collect();
        let shape: Vec<Vec<f64>> = shaping.iter().map(|s| s[e * horizon..(e + 1) * horizon].to_vec()).collect();
        let aligned = align_trajectory(&adv, &shape, beta, gamma);
        for (a, row) in aligned.iter().enumerate() {
            for (t, v) in row.iter().enumerate() {
                let idx = buf.index(e, t, a);
                buf.policy_advantages[idx] = *v;
            }
        }
    }
}

/// Per-agent mean over `(env, t)` of the discounted past advantage sum
/// `S(t)`, the quantity whose expectation biases alignment towards cooperation.
pub fn cooperative_bias(buf: &RolloutBuffer, gamma: f64) -> Vec<f64> {
    let count = (buf.num_envs * buf.episode_length) as f64;
    (0..buf.num_agents)
        .map(|a| {
            (0..buf.num_envs)
                .map(|e| discounted_past_sums(&buf.trajectory(&buf.advantages, e, a), gamma).iter().sum::<f64>())
                .sum::<f64>()
                / count
        })
        .collect()
}

pub(crate) fn standardize_in_place(values: &mut [f64]) {
    standardize(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_lambda_is_td_error() {
        let r = [1.0, -2.0, 0.5];
        let v = [0.3, 0.1, -0.4];
        let (adv, ret) = gae(&r, &v, 0.9, 0.0);
        assert_eq!(adv, vec![1.0 + 0.9 * 0.1 - 0.3, -2.0 + 0.9 * -0.4 - 0.1, 0.5 + 0.4]);
        for t in 0..3 {
            assert_eq!(ret[t], adv[t] + v[t]);
        }
    }

    #[test]
    fn zero_rewards_and_values() {
        let (adv, ret) = gae(&[0.0; 5], &[0.0; 5], 0.99, 0.95);
        assert!(adv.iter().chain(&ret).all(|v| *v == 0.0));
    }

    #[test]
    fn empty_past_at_start_and_beta_zero_identity() {
        let adv = vec![vec![1.0, 2.0, -1.0], vec![0.5, -3.0, 4.0]];
        let out = align_trajectory(&adv, &adv, 0.7, 0.9);
        assert_eq!(out[0][0], 1.0);
        assert_eq!(out[1][0], 0.5);
        assert_eq!(align_trajectory(&adv, &adv, 0.0, 0.9), adv);
    }

    #[test]
    fn alignment_matches_double_loop() {
        let adv = vec![vec![1.0, 2.0, -1.0], vec![0.5, -3.0, 4.0]];
        let (beta, g) = (0.2, 0.9);
        let out = align_trajectory(&adv, &adv, beta, g);
        for i in 0..2 {
            for t in 0..3 {
                let mut past = 0.0;
                for k in 0..t {
                    past += g.powi((t - k) as i32) * adv[i][k];
                }
                let mut expected = adv[i][t];
                for (j, other) in adv.iter().enumerate() {
                    if j != i {
                        expected += beta * g * past * other[t];
                    }
                }
                assert!((out[i][t] - expected).abs() < 1e-14);
            }
        }
        // Hand values for agent 0 at t = 2: S = 0.9^2 * 1 + 0.9 * 2 = 2.61.
        assert!((out[0][2] - (-1.0 + 0.2 * 0.9 * 2.61 * 4.0)).abs() < 1e-14);
    }

    #[test]
    fn constant_advantage_bias_closed_form() {
        let mut buf = RolloutBuffer::new(2, 7, 1, 1);
        let c = 0.3;
        buf.advantages = vec![c; 14];
        let g: f64 = 0.9;
        let b = cooperative_bias(&buf, g)[0];
        let expected = (0..7).map(|t| c * g * (1.0 - g.powi(t)) / (1.0 - g)).sum::<f64>() / 7.0;
        assert!((b - expected).abs() < 1e-14);
        buf.advantages = vec![0.0; 14];
        assert_eq!(cooperative_bias(&buf, g), vec![0.0]);
    }

    proptest! {
        #[test]
        fn full_lambda_matches_monte_carlo(
            r in prop::collection::vec(-10.0..10.0f64, 1..40),
            seed in 0u64..1000,
            gamma in 0.0..1.0f64,
        ) {
            let v: Vec<f64> = (0..r.len()).map(|t| ((t as u64 * 31 + seed) as f64 * 0.13).sin() * 5.0).collect();
            let (adv, _) = gae(&r, &v, gamma, 1.0);
            for t in 0..r.len() {
                let mut mc = 0.0;
                for (l, rr) in r[t..].iter().enumerate() {
                    mc += gamma.powi(l as i32) * rr;
                }
                let oracle = mc - v[t];
                prop_assert!((adv[t] - oracle).abs() <= 1e-9 * oracle.abs().max(1.0));
            }
        }

        #[test]
        fn beta_zero_is_identity(adv in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 6), 1..5)) {
            prop_assert_eq!(align_trajectory(&adv, &adv, 0.0, 0.9), adv);
        }
    }
}
