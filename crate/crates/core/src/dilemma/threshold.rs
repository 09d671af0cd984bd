use serde::Serialize;

use super::SimplifiedWorld;
use crate::error::{Error, Result};

const REL_TOL: f64 = 1e-8;
const MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Zone {
    /// Every private and social gradient is negative.
    NoDilemmaLow,
    /// Every private gradient is negative but some social gradient is positive.
    Dilemma,
    /// Some private gradient is positive.
    NoDilemmaHigh,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub lambda: f64,
    /// Smallest lambda at which some social gradient turns positive.
    pub lambda_low: f64,
    /// Smallest lambda at which some private gradient turns positive.
    pub lambda_critical: f64,
    pub zone: Zone,
    pub max_private: f64,
    pub max_social: f64,
}

/// The lambda at which the lag-0 private gradient of `company` changes sign.
///
/// Requires zero candidate mitigation, so `U_t = 0` and the gradient is affine
/// in lambda: `-E[K_{t+1}] / (1 - u) + lambda * C`.
pub fn signflip_lambda(world: &SimplifiedWorld, company: usize) -> Result<f64> {
    world.validate()?;
    if world.mitigation.iter().any(|&u| u != 0.0) {
        return Err(Error::Domain("sign flip is defined at zero cumulative mitigation; set mitigation to 0".into()));
    }
    let cost = -super::private_gradient(&world.with_lambda(0.0), company, 0)?;
    let slope = super::private_gradient(&world.with_lambda(1.0), company, 0)? + cost;
    if !(cost > 0.0 && slope > 0.0) {
        return Err(Error::NoSignFlip(format!(
            "company {company} at t = {}: cost {cost}, benefit slope {slope}",
            world.t
        )));
    }
    Ok(cost / slope)
}

/// Largest private and social gradient over all companies and lags.
fn extremes(world: &SimplifiedWorld) -> Result<(f64, f64)> {
    let mut max_private = f64::NEG_INFINITY;
    let mut max_social = f64::NEG_INFINITY;
    for i in 0..world.num_companies() {
        for k in 0..=world.max_lag.min(world.t) {
            let sens = world.capital_sensitivities(i, k)?;
            max_private = max_private.max(sens[i]);
            max_social = max_social.max(sens.iter().sum());
        }
    }
    Ok((max_private, max_social))
}

/// Smallest lambda where `f` becomes positive, by geometric bracketing from
/// `[0, 1]` then bisection.
fn first_positive(world: &SimplifiedWorld, f: impl Fn(&SimplifiedWorld) -> Result<f64>) -> Result<f64> {
    let mut lo = 0.0;
    let f_lo = f(&world.with_lambda(lo))?;
    if f_lo > 0.0 {
        return Err(Error::Search {
            message: "gradient already positive at lambda = 0".into(),
            lo,
            hi: lo,
            f_lo,
            f_hi: f_lo,
        });
    }
    let mut hi = 1.0;
    let mut f_hi = f(&world.with_lambda(hi))?;
    let mut expansions = 0;
    while f_hi <= 0.0 {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > MAX_ITER || !hi.is_finite() {
            return Err(Error::Search {
                message: "no sign change found while expanding the bracket".into(),
                lo,
                hi,
                f_lo,
                f_hi,
            });
        }
        f_hi = f(&world.with_lambda(hi))?;
    }
    for _ in 0..MAX_ITER {
        if hi - lo <= REL_TOL * hi {
            return Ok(hi);
        }
        let mid = 0.5 * (lo + hi);
        if f(&world.with_lambda(mid))? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(Error::Search {
        message: format!("bisection did not converge in {MAX_ITER} iterations"),
        lo,
        hi,
        f_lo: f(&world.with_lambda(lo))?,
        f_hi: f(&world.with_lambda(hi))?,
    })
}

/// Locates both thresholds and classifies `lambda`.
pub fn classify_zone(world: &SimplifiedWorld, lambda: f64) -> Result<ThresholdResult> {
    world.validate()?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda = {lambda} must be finite and non-negative")));
    }
    let lambda_critical = first_positive(world, |w| extremes(w).map(|e| e.0))?;
    let lambda_low = first_positive(world, |w| extremes(w).map(|e| e.1))?;
    let (max_private, max_social) = extremes(&world.with_lambda(lambda))?;
    let zone = if max_private > 0.0 {
        Zone::NoDilemmaHigh
    } else if max_social > 0.0 {
        Zone::Dilemma
    } else {
        Zone::NoDilemmaLow
    };
    Ok(ThresholdResult {
        lambda,
        lambda_low,
        lambda_critical,
        zone,
        max_private,
        max_social,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{private_gradient, ExpectationMode};
    use super::*;

    fn world() -> SimplifiedWorld {
        SimplifiedWorld {
            capital: vec![50.0, 45.0, 55.0],
            loss: vec![0.1, 0.1, 0.1],
            mu: [0.005, 0.003, 0.004],
            lambda_weights: [1.0, 1.0, 1.0],
            p0: [0.28, 0.13, 0.17],
            lambda: 0.0,
            market_growth: 0.1,
            t: 40,
            mitigation: vec![0.0; 3],
            max_lag: 10,
            mode: ExpectationMode::Exact,
        }
    }

    #[test]
    fn signflip_zeroes_the_private_gradient() {
        let w = world();
        let lam = signflip_lambda(&w, 0).unwrap();
        let g = private_gradient(&w.with_lambda(lam), 0, 0).unwrap();
        let scale = private_gradient(&w.with_lambda(0.0), 0, 0).unwrap().abs();
        assert!(g.abs() <= 1e-9 * scale, "{g}");
        assert!(private_gradient(&w.with_lambda(lam * (1.0 - 1e-4)), 0, 0).unwrap() < 0.0);
        assert!(private_gradient(&w.with_lambda(lam * (1.0 + 1e-4)), 0, 0).unwrap() > 0.0);
    }

    #[test]
    fn signflip_halves_when_capital_doubles() {
        let w = world();
        let mut doubled = w.clone();
        doubled.capital.iter_mut().for_each(|k| *k *= 2.0);
        let a = signflip_lambda(&w, 1).unwrap();
        let b = signflip_lambda(&doubled, 1).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn signflip_degenerate_worlds() {
        let mut w = world();
        w.t = 0;
        assert!(matches!(signflip_lambda(&w, 0), Err(Error::NoSignFlip(_))));
        let mut w = world();
        w.capital[0] = 0.0;
        assert!(matches!(signflip_lambda(&w, 0), Err(Error::NoSignFlip(_))));
        let mut w = world();
        w.mitigation[2] = 0.1;
        assert!(matches!(signflip_lambda(&w, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn three_zones_in_order() {
        let w = world();
        let r = classify_zone(&w, 0.0).unwrap();
        assert_eq!(r.zone, Zone::NoDilemmaLow);
        assert!(0.0 < r.lambda_low && r.lambda_low < r.lambda_critical);
        let mid = 0.5 * (r.lambda_low + r.lambda_critical);
        assert_eq!(classify_zone(&w, mid).unwrap().zone, Zone::Dilemma);
        assert_eq!(classify_zone(&w, r.lambda_critical * 1.01).unwrap().zone, Zone::NoDilemmaHigh);
    }

    #[test]
    fn zero_capital_cannot_bracket() {
        let mut w = world();
        w.capital = vec![0.0; 3];
        assert!(matches!(classify_zone(&w, 1.0), Err(Error::Search { .. })));
    }
}
