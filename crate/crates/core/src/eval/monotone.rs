//! How often predicted purchase intent rises (weakly) with the coupon amount.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::policy::MenuScorer;
use crate::error::{Error, Result};
use crate::iidn::menu_with_null;
use crate::money::Cents;
use crate::simulator::Arrival;

pub const MONOTONE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub amounts: Vec<Cents>,
    pub per_user: Vec<bool>,
    /// Mean predicted pP at each amount.
    pub mean_p_pay: Vec<f64>,
}

impl MonotonicityReport {
    pub fn monotone_users(&self) -> usize {
        self.per_user.iter().filter(|&&m| m).count()
    }

    pub fn fraction(&self) -> f64 {
        if self.per_user.is_empty() {
            return 1.0;
        }
        self.monotone_users() as f64 / self.per_user.len() as f64
    }
}

/// Non-strict monotonicity of pP over `{0} ∪ menu` for each arrival.
pub fn monotonicity_report<S: MenuScorer + ?Sized>(
    scorer: &S,
    arrivals: &[Arrival],
    menu: &[Cents],
) -> Result<MonotonicityReport> {
    let amounts = menu_with_null(menu);
    let mut sums = vec![0.0; amounts.len()];
    let mut per_user = Vec::with_capacity(arrivals.len());
    for a in arrivals {
        let scores = scorer.score_arrival(a, menu)?;
        if scores.len() != amounts.len() {
            return Err(Error::contract("scorer returned a menu of the wrong length"));
        }
        for (s, m) in sums.iter_mut().zip(&scores) {
            *s += m.p_pay;
        }
        per_user.push(scores.windows(2).all(|w| w[1].p_pay >= w[0].p_pay - MONOTONE_TOLERANCE));
    }
    let n = arrivals.len().max(1) as f64;
    Ok(MonotonicityReport {
        amounts,
        per_user,
        mean_p_pay: sums.into_iter().map(|s| s / n).collect(),
    })
}

/// `amount,<model>...` with one mean-pP column per model.
pub fn write_monotonicity_csv<W: Write>(mut w: W, curves: &[(&str, &MonotonicityReport)]) -> Result<()> {
    let io = |e| Error::io("monotonicity csv", e);
    let Some((_, first)) = curves.first() else {
        return Err(Error::contract("no monotonicity curves to write"));
    };
    if curves.iter().any(|(_, r)| r.amounts != first.amounts) {
        return Err(Error::contract("monotonicity curves use different menus"));
    }
    let names: Vec<&str> = curves.iter().map(|(n, _)| *n).collect();
    writeln!(w, "amount,{}", names.join(",")).map_err(io)?;
    for (j, amount) in first.amounts.iter().enumerate() {
        let cols: Vec<String> = curves.iter().map(|(_, r)| format!("{:.8}", r.mean_p_pay[j])).collect();
        writeln!(w, "{amount},{}", cols.join(",")).map_err(io)?;
    }
    Ok(())
}
