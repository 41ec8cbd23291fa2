//! Budget price estimation by bisection on α.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{choose, gate, validate_gamma, ScoredUser};
use crate::error::{Error, Result};
use crate::money::Cents;

pub const DUAL_SCHEMA: &str = "coupon-alloc/dual/v1";
pub const DUAL_TOLERANCE: f64 = 1e-6;

/// The budget dual price plus how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub schema: String,
    pub alpha: f64,
    pub sample_size: usize,
    pub scaled_budget: Cents,
    pub tolerance: f64,
    /// Per-user surplus `max_j (v_ij − α c_j)`; informational only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
}

impl DualState {
    /// A hand-set price.
    pub fn fixed(alpha: f64) -> Self {
        DualState {
            schema: DUAL_SCHEMA.into(),
            alpha,
            sample_size: 0,
            scaled_budget: Cents::ZERO,
            tolerance: 0.0,
            beta: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != DUAL_SCHEMA {
            return Err(Error::contract(format!("unknown dual schema {:?}", self.schema)));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::NonFinite(format!("dual price alpha = {}", self.alpha)));
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("dual state serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let d: DualState = serde_json::from_str(&text).map_err(|e| Error::parse("dual state", path, e))?;
        d.validate()?;
        Ok(d)
    }
}

/// Spend of the unconstrained rule at price `alpha` over eligible users.
pub fn projected_spend(sample: &[ScoredUser], alpha: f64, gamma: f64) -> Cents {
    sample
        .iter()
        .filter(|u| gate(u, gamma))
        .map(|u| choose(&u.menu, alpha).map_or(Cents::ZERO, |j| u.menu[j].amount))
        .sum()
}

/// Smallest `α ≥ 0` (to within [`DUAL_TOLERANCE`]) whose projected spend fits `scaled_budget`.
pub fn estimate_dual(sample: &[ScoredUser], scaled_budget: Cents, gamma: f64) -> Result<DualState> {
    if scaled_budget.is_negative() {
        return Err(Error::contract(format!("budget {scaled_budget} is negative")));
    }
    if sample.is_empty() {
        return Err(Error::contract("dual estimation needs a nonempty sample"));
    }
    validate_gamma(gamma)?;
    sample.iter().try_for_each(ScoredUser::validate)?;

    let alpha = if projected_spend(sample, 0.0, gamma) <= scaled_budget {
        0.0
    } else {
        // At this price every paid coupon is at best tied with the null one.
        let mut hi = sample
            .iter()
            .flat_map(|u| {
                let v0 = u.menu[0].p_pay;
                u.menu[1..].iter().map(move |m| (m.p_pay - v0) / m.amount.units())
            })
            .fold(0.0f64, f64::max);
        while projected_spend(sample, hi, gamma) > scaled_budget {
            // Only reachable through rounding at the tie; nudge upward.
            hi = hi * 2.0 + DUAL_TOLERANCE;
        }
        let mut lo = 0.0;
        while hi - lo > DUAL_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            if projected_spend(sample, mid, gamma) <= scaled_budget {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let beta = sample
        .iter()
        .map(|u| {
            u.menu
                .iter()
                .map(|m| m.p_pay - alpha * m.amount.units())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(DualState {
        schema: DUAL_SCHEMA.into(),
        alpha,
        sample_size: sample.len(),
        scaled_budget,
        tolerance: DUAL_TOLERANCE,
        beta: Some(beta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::tests::user;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sample(rng: &mut ChaCha8Rng, m: usize) -> Vec<ScoredUser> {
        (0..m)
            .map(|i| {
                let mut v: [f64; 4] = [rng.random_range(0.0..0.3), 0.0, 0.0, 0.0];
                for j in 1..4 {
                    v[j] = (v[j - 1] + rng.random_range(0.0..0.15)).min(1.0);
                }
                user(i as u64, &v, &[0, 1, 2, 3])
            })
            .collect()
    }

    #[test]
    fn slack_budget_is_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_sample(&mut rng, 8);
        let d = estimate_dual(&s, Cents(8 * 300), 1.0).unwrap();
        assert_eq!(d.alpha, 0.0);
        assert_eq!(d.beta.as_ref().unwrap().len(), 8);
    }

    #[test]
    fn zero_budget_prices_everything_out() {
        let s: Vec<_> = (0..4).map(|i| user(i, &[0.1, 0.2, 0.3], &[0, 1, 2])).collect();
        let d = estimate_dual(&s, Cents::ZERO, 1.0).unwrap();
        assert!(d.alpha > 0.0);
        assert_eq!(projected_spend(&s, d.alpha, 1.0), Cents::ZERO);
        assert!(estimate_dual(&s, Cents(-1), 1.0).is_err());
        assert!(estimate_dual(&[], Cents(1), 1.0).is_err());
    }

    #[test]
    fn bisection_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let s = random_sample(&mut rng, 8);
            let budget = Cents(rng.random_range(0..2400));
            let d = estimate_dual(&s, budget, 1.0).unwrap();
            // Grid oracle: feasible point minimizing the gap to B.
            let mut grid = None;
            let mut best_gap = i64::MAX;
            for k in 0..=20_000 {
                let a = k as f64 * 1e-4;
                let spend = projected_spend(&s, a, 1.0);
                if spend <= budget && (budget - spend).0 < best_gap {
                    best_gap = (budget - spend).0;
                    grid = Some(a);
                }
            }
            let grid = grid.unwrap();
            assert!((d.alpha - grid).abs() <= 1e-3, "bisection {} vs grid {}", d.alpha, grid);
            assert!(projected_spend(&s, d.alpha, 1.0) <= budget);
        }
    }

    #[test]
    fn json_round_trip() {
        let d = DualState {
            beta: None,
            ..DualState::fixed(0.125)
        };
        let back: DualState = serde_json::from_str(&d.to_json_string()).unwrap();
        assert_eq!(back, d);
        let bad = DualState::fixed(f64::NAN);
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn spend_is_monotone_in_price(seed in 0u64..1000, a in 0.0f64..0.3, b in 0.0f64..0.3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_sample(&mut rng, 12);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(projected_spend(&s, hi, 1.0) <= projected_spend(&s, lo, 1.0));
        }
    }
}
