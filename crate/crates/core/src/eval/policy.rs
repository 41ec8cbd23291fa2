//! Allocation policies and the scorers that feed them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::allocator::ScoredUser;
use crate::error::{Error, Result};
use crate::iidn::{menu_with_null, IntentModel, MenuScore};
use crate::money::Cents;
use crate::simulator::Arrival;

pub const DEFAULT_ALPHA_MIN: f64 = 0.02;

/// The four compared arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PolicyKind {
    NonAllocation,
    /// A uniformly random paid amount for everyone, while budget lasts.
    AllAllocation,
    Uplift {
        alpha_min: f64,
    },
    IidnMckp {
        gamma: f64,
    },
}

impl PolicyKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PolicyKind::Uplift { alpha_min } if !(0.0..=1.0).contains(&alpha_min) => Err(Error::config(format!(
                "uplift alpha_min = {alpha_min} is outside [0, 1]"
            ))),
            PolicyKind::IidnMckp { gamma } if !(0.0..=1.0).contains(&gamma) => {
                Err(Error::config(format!("gamma = {gamma} is outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    pub fn spends(&self) -> bool {
        !matches!(self, PolicyKind::NonAllocation)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::NonAllocation => "Non-allocation",
            PolicyKind::AllAllocation => "All-allocation",
            PolicyKind::Uplift { .. } => "Uplift-allocation",
            PolicyKind::IidnMckp { .. } => "IIDN-MCKP",
        })
    }
}

/// Index of the amount with the largest uplift over no coupon, if it reaches `alpha_min`.
pub fn uplift_policy(menu: &[MenuScore], alpha_min: f64) -> usize {
    let Some(base) = menu.first().map(|m| m.p_pay) else {
        return 0;
    };
    let mut best = (0, 0.0);
    for (j, m) in menu.iter().enumerate().skip(1) {
        let lift = m.p_pay - base;
        if lift > best.1 {
            best = (j, lift);
        }
    }
    if best.0 > 0 && best.1 >= alpha_min {
        best.0
    } else {
        0
    }
}

/// Anything that can price a menu for an arriving user.
pub trait MenuScorer {
    /// Scores for `{0} ∪ menu`, ascending.
    fn score_arrival(&self, a: &Arrival, menu: &[Cents]) -> Result<Vec<MenuScore>>;
}

impl<M: IntentModel> MenuScorer for M {
    fn score_arrival(&self, a: &Arrival, menu: &[Cents]) -> Result<Vec<MenuScore>> {
        self.score_menu(&a.s, &a.user.h, menu)
    }
}

/// The simulator's true intents, used as an oracle model.
#[derive(Debug, Clone, Copy, Default)]
pub struct GroundTruth;

impl MenuScorer for GroundTruth {
    fn score_arrival(&self, a: &Arrival, menu: &[Cents]) -> Result<Vec<MenuScore>> {
        Ok(menu_with_null(menu)
            .into_iter()
            .map(|amount| MenuScore {
                amount,
                p_stay: a.user.p_stay(amount),
                p_pay: a.user.p_pay(amount),
            })
            .collect())
    }
}

pub fn score_arrivals<S: MenuScorer + ?Sized>(
    scorer: &S,
    arrivals: &[Arrival],
    menu: &[Cents],
) -> Result<Vec<ScoredUser>> {
    arrivals
        .iter()
        .map(|a| {
            Ok(ScoredUser {
                user_id: a.user.id,
                menu: scorer.score_arrival(a, menu)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::tests::menu;

    #[test]
    fn uplift_examples() {
        assert_eq!(uplift_policy(&menu(&[0.10, 0.12, 0.18], &[0, 1, 2]), 0.05), 2);
        assert_eq!(uplift_policy(&menu(&[0.10, 0.11, 0.12], &[0, 1, 2]), 0.05), 0);
        assert_eq!(uplift_policy(&menu(&[0.2, 0.2, 0.2], &[0, 1, 2]), 1e-9), 0);
        assert_eq!(uplift_policy(&menu(&[0.2, 0.2, 0.2], &[0, 1, 2]), 0.0), 0);
        // Largest lift wins even when it is not the largest amount.
        assert_eq!(uplift_policy(&menu(&[0.1, 0.3, 0.2], &[0, 1, 2]), 0.0), 1);
    }

    #[test]
    fn policy_validation_and_names() {
        assert!(PolicyKind::Uplift { alpha_min: 1.5 }.validate().is_err());
        assert!(PolicyKind::IidnMckp { gamma: -0.1 }.validate().is_err());
        assert!(PolicyKind::IidnMckp { gamma: 0.7 }.validate().is_ok());
        assert_eq!(PolicyKind::AllAllocation.to_string(), "All-allocation");
        assert!(!PolicyKind::NonAllocation.spends());
    }
}
