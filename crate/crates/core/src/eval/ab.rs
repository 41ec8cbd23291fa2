//! Simulated A/B runs and budget sweeps against ground-truth outcomes.

use std::fmt::Write as _;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::increment_cost;
use super::policy::{score_arrivals, uplift_policy, MenuScorer, PolicyKind};
use crate::allocator::{
    allocate_online, estimate_dual, BudgetLedger, Decision, DualState, OnlineAllocator, ScoredUser,
};
use crate::error::{Error, Result};
use crate::iidn::menu_with_null;
use crate::money::Cents;
use crate::simulator::{stream_rng, Arrival, Simulator, Stream};

/// Shared settings for [`run_ab`] and [`budget_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Users in the stream, split round-robin across the arms.
    pub users: usize,
    /// Index of the first stream user.
    pub offset: u64,
    /// Users scored to estimate the budget price; must not overlap the stream.
    pub dual_sample: usize,
    pub dual_offset: u64,
    /// Paid amounts; the null coupon is implied.
    pub menu: Vec<Cents>,
    /// Per-arm budget.
    pub budget: Cents,
    pub policies: Vec<PolicyKind>,
    /// Seed for policy-side randomness (All-allocation draws).
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.policies.is_empty() || !self.policies.contains(&PolicyKind::NonAllocation) {
            return Err(Error::config(
                "the experiment needs a non-allocation arm as the natural-rate reference",
            ));
        }
        self.policies.iter().try_for_each(PolicyKind::validate)?;
        let arms = self.policies.len();
        if self.users == 0 || self.users % arms != 0 {
            return Err(Error::config(format!(
                "{} users cannot be split into {arms} equal arms",
                self.users
            )));
        }
        if self.dual_sample == 0 {
            return Err(Error::config("dual sample must be nonempty"));
        }
        let (a0, a1) = (self.offset, self.offset + self.users as u64);
        let (b0, b1) = (self.dual_offset, self.dual_offset + self.dual_sample as u64);
        if a0 < b1 && b0 < a1 {
            return Err(Error::config("dual-estimation users overlap the experiment stream"));
        }
        validate_paid_menu(&self.menu)?;
        if self.budget.is_negative() {
            return Err(Error::config(format!("budget {} is negative", self.budget)));
        }
        Ok(())
    }

    pub fn arm_size(&self) -> usize {
        self.users / self.policies.len()
    }

    /// Stream users of arm `k`.
    fn arm_ids(&self, k: usize) -> impl Iterator<Item = u64> + '_ {
        let arms = self.policies.len() as u64;
        (0..self.arm_size() as u64).map(move |i| self.offset + i * arms + k as u64)
    }

    /// Budget rescaled from one arm to the dual sample.
    pub fn scaled_budget(&self, budget: Cents) -> Cents {
        Cents((budget.0 as i128 * self.dual_sample as i128 / self.arm_size() as i128) as i64)
    }
}

pub fn validate_paid_menu(menu: &[Cents]) -> Result<()> {
    if menu.is_empty() {
        return Err(Error::config("coupon menu is empty"));
    }
    if menu.iter().any(|c| c.0 <= 0) {
        return Err(Error::config("coupon amounts must be positive"));
    }
    if menu.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("coupon amounts must be strictly increasing"));
    }
    Ok(())
}

/// One row of the policy comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub policy: String,
    pub users: usize,
    pub buyers: usize,
    pub conversion: f64,
    pub spend: Cents,
    /// `None` when the lift over the natural rate is not positive.
    pub increment_cost: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct AbOutcome {
    pub reports: Vec<RunReport>,
    /// Price used by the IIDN-MCKP arm, if any.
    pub dual: Option<DualState>,
    /// Decision log of the IIDN-MCKP arm.
    pub decisions: Vec<Decision>,
}

fn ic_or_none(spend: Cents, users: usize, rate: f64, natural: f64) -> Result<Option<f64>> {
    match increment_cost(spend.units(), users, rate, natural) {
        Ok(ic) => Ok(Some(ic)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn check_ledger(policy: &str, ledger: &BudgetLedger) -> Result<()> {
    let total: Cents = ledger.log().iter().map(|d| d.amount).sum();
    if ledger.spent() > ledger.budget() || total != ledger.spent() {
        return Err(Error::BudgetBreach(format!(
            "{policy} spent {} (log total {total}) against budget {}",
            ledger.spent(),
            ledger.budget()
        )));
    }
    Ok(())
}

/// Runs every policy on its own equal, disjoint slice of the stream under the same budget.
pub fn run_ab<S: MenuScorer + ?Sized>(sim: &Simulator, scorer: &S, cfg: &ExperimentConfig) -> Result<AbOutcome> {
    cfg.validate()?;
    let full_menu = menu_with_null(&cfg.menu);
    let mut dual = None;
    let mut decisions = Vec::new();
    let mut raw = Vec::with_capacity(cfg.policies.len());
    for (k, policy) in cfg.policies.iter().enumerate() {
        let arrivals: Vec<Arrival> = cfg.arm_ids(k).map(|i| sim.arrival(i)).collect();
        let ledger = match *policy {
            PolicyKind::NonAllocation => {
                let mut ledger = BudgetLedger::new(cfg.budget)?;
                for (i, a) in arrivals.iter().enumerate() {
                    ledger.commit(i as u64, a.user.id, false, 0, Cents::ZERO)?;
                }
                ledger
            }
            PolicyKind::AllAllocation => {
                let mut ledger = BudgetLedger::new(cfg.budget)?;
                for (i, a) in arrivals.iter().enumerate() {
                    let j = stream_rng(cfg.seed, Stream::Policy, a.user.id).random_range(1..full_menu.len());
                    let j = if full_menu[j] <= ledger.remaining() { j } else { 0 };
                    ledger.commit(i as u64, a.user.id, false, j, full_menu[j])?;
                }
                ledger
            }
            PolicyKind::Uplift { alpha_min } => {
                let mut ledger = BudgetLedger::new(cfg.budget)?;
                for (i, a) in arrivals.iter().enumerate() {
                    let menu = scorer.score_arrival(a, &cfg.menu)?;
                    let j = uplift_policy(&menu, alpha_min);
                    let j = if menu[j].amount <= ledger.remaining() { j } else { 0 };
                    ledger.commit(i as u64, a.user.id, false, j, menu[j].amount)?;
                }
                ledger
            }
            PolicyKind::IidnMckp { gamma } => {
                let sample = dual_sample(sim, scorer, cfg)?;
                let d = estimate_dual(&sample, cfg.scaled_budget(cfg.budget), gamma)?;
                let mut alloc = OnlineAllocator::new(&d, cfg.budget, gamma)?;
                for a in &arrivals {
                    let menu = scorer.score_arrival(a, &cfg.menu)?;
                    alloc.decide(&ScoredUser {
                        user_id: a.user.id,
                        menu,
                    })?;
                }
                dual = Some(d);
                let ledger = alloc.into_ledger();
                decisions = ledger.log().to_vec();
                ledger
            }
        };
        check_ledger(&policy.to_string(), &ledger)?;
        let buyers = arrivals
            .iter()
            .zip(ledger.log())
            .filter(|(a, d)| sim.realize(&a.user, d.amount).1)
            .count();
        raw.push((policy, buyers, ledger.spent()));
    }

    let m = cfg.arm_size();
    let natural = raw
        .iter()
        .find(|r| *r.0 == PolicyKind::NonAllocation)
        .map(|r| r.1 as f64 / m as f64)
        .expect("validated");
    let reports = raw
        .into_iter()
        .map(|(policy, buyers, spend)| {
            let conversion = buyers as f64 / m as f64;
            let increment_cost = if policy.spends() {
                ic_or_none(spend, m, conversion, natural)?
            } else {
                Some(0.0)
            };
            Ok(RunReport {
                policy: policy.to_string(),
                users: m,
                buyers,
                conversion,
                spend,
                increment_cost,
                seed: sim.seed(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AbOutcome {
        reports,
        dual,
        decisions,
    })
}

fn dual_sample<S: MenuScorer + ?Sized>(sim: &Simulator, scorer: &S, cfg: &ExperimentConfig) -> Result<Vec<ScoredUser>> {
    let arrivals = sim.arrivals(cfg.dual_offset, cfg.dual_sample);
    score_arrivals(scorer, &arrivals, &cfg.menu)
}

/// One budget level of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub budget: Cents,
    pub alpha: f64,
    pub users: usize,
    pub buyers: usize,
    pub conversion: f64,
    pub spend: Cents,
    pub increment_cost: Option<f64>,
}

/// IIDN-MCKP at each budget on the same users with shared outcome noise.
///
/// The partition is the IIDN-MCKP arm of [`run_ab`] with the same config, so
/// the row at `cfg.budget` reproduces that arm.
pub fn budget_sweep<S: MenuScorer + ?Sized>(
    sim: &Simulator,
    scorer: &S,
    cfg: &ExperimentConfig,
    budgets: &[Cents],
) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if budgets.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::config("sweep budgets must be ascending"));
    }
    if let Some(b) = budgets.iter().find(|b| b.is_negative()) {
        return Err(Error::config(format!("sweep budget {b} is negative")));
    }
    let (k, gamma) = cfg
        .policies
        .iter()
        .enumerate()
        .find_map(|(k, p)| match *p {
            PolicyKind::IidnMckp { gamma } => Some((k, gamma)),
            _ => None,
        })
        .ok_or_else(|| Error::config("a budget sweep needs an IIDN-MCKP policy"))?;
    let arrivals: Vec<Arrival> = cfg.arm_ids(k).map(|i| sim.arrival(i)).collect();
    let users = score_arrivals(scorer, &arrivals, &cfg.menu)?;
    let sample = dual_sample(sim, scorer, cfg)?;
    let m = arrivals.len();
    let natural = arrivals.iter().filter(|a| sim.realize(&a.user, Cents::ZERO).1).count() as f64 / m as f64;

    budgets
        .iter()
        .map(|&budget| {
            let dual = estimate_dual(&sample, cfg.scaled_budget(budget), gamma)?;
            let ledger = allocate_online(&users, &dual, budget, gamma)?;
            check_ledger("IIDN-MCKP", &ledger)?;
            let buyers = arrivals
                .iter()
                .zip(ledger.log())
                .filter(|(a, d)| sim.realize(&a.user, d.amount).1)
                .count();
            let conversion = buyers as f64 / m as f64;
            Ok(SweepRow {
                budget,
                alpha: dual.alpha,
                users: m,
                buyers,
                conversion,
                spend: ledger.spent(),
                increment_cost: ic_or_none(ledger.spent(), m, conversion, natural)?,
            })
        })
        .collect()
}

fn fmt_ic(ic: Option<f64>) -> String {
    ic.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"))
}

pub const REPORT_HEADER: &str = "policy,users,buyers,conversion,spend,increment_cost,seed";
pub const SWEEP_HEADER: &str = "budget,alpha,users,buyers,conversion,spend,increment_cost";

pub fn write_reports_csv<W: Write>(mut w: W, reports: &[RunReport]) -> std::io::Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{:.6},{},{},{}",
            r.policy,
            r.users,
            r.buyers,
            r.conversion,
            r.spend,
            fmt_ic(r.increment_cost),
            r.seed
        )?;
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.8},{},{},{:.6},{},{}",
            r.budget,
            r.alpha,
            r.users,
            r.buyers,
            r.conversion,
            r.spend,
            fmt_ic(r.increment_cost)
        )?;
    }
    Ok(())
}

/// Policy comparison as an aligned text table.
pub fn render_reports(reports: &[RunReport]) -> String {
    let mut s = format!(
        "{:<18} {:>10} {:>10} {:>11} {:>14} {:>15}\n",
        "Policy", "Users", "Buyers", "Conversion", "Spend", "Increment cost"
    );
    for r in reports {
        let _ = writeln!(
            s,
            "{:<18} {:>10} {:>10} {:>10.2}% {:>14} {:>15}",
            r.policy,
            r.users,
            r.buyers,
            100.0 * r.conversion,
            r.spend.to_string(),
            fmt_ic(r.increment_cost)
        );
    }
    s
}

/// Budget sweep as an aligned text table.
pub fn render_sweep(rows: &[SweepRow]) -> String {
    let mut s = format!(
        "{:>14} {:>10} {:>10} {:>11} {:>14} {:>15}\n",
        "Budget", "Users", "Buyers", "Conversion", "Spend", "Increment cost"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>14} {:>10} {:>10} {:>10.2}% {:>14} {:>15}",
            r.budget.to_string(),
            r.users,
            r.buyers,
            100.0 * r.conversion,
            r.spend.to_string(),
            fmt_ic(r.increment_cost)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::policy::GroundTruth;
    use crate::simulator::{Population, PopulationSpec, SessionSpec};

    fn sim() -> Simulator {
        Simulator {
            population: Population::new(PopulationSpec::default(), 5).unwrap(),
            session: SessionSpec::default(),
        }
    }

    pub(crate) fn config(users: usize, budget: Cents) -> ExperimentConfig {
        ExperimentConfig {
            users,
            offset: 0,
            dual_sample: 1000,
            dual_offset: 1_000_000,
            menu: vec![Cents(100), Cents(200), Cents(300), Cents(500)],
            budget,
            policies: vec![
                PolicyKind::NonAllocation,
                PolicyKind::AllAllocation,
                PolicyKind::Uplift { alpha_min: 0.02 },
                PolicyKind::IidnMckp { gamma: 0.7 },
            ],
            seed: 3,
        }
    }

    #[test]
    fn config_validation() {
        assert!(config(4000, Cents(0)).validate().is_ok());
        assert!(config(4001, Cents(0)).validate().is_err());
        let mut c = config(4000, Cents(0));
        c.dual_offset = 10;
        assert!(c.validate().is_err());
        let mut c = config(4000, Cents(0));
        c.policies.remove(0);
        assert!(c.validate().is_err());
        let mut c = config(4000, Cents(0));
        c.menu = vec![Cents(200), Cents(100)];
        assert!(c.validate().is_err());
    }

    #[test]
    fn arms_are_disjoint_and_equal() {
        let c = config(4000, Cents(0));
        let mut seen = std::collections::BTreeSet::new();
        for k in 0..4 {
            let ids: Vec<u64> = c.arm_ids(k).collect();
            assert_eq!(ids.len(), 1000);
            for i in ids {
                assert!(seen.insert(i));
            }
        }
        assert_eq!(seen.len(), 4000);
    }

    #[test]
    fn zero_budget_is_the_natural_rate() {
        let s = sim();
        let out = run_ab(&s, &GroundTruth, &config(4000, Cents::ZERO)).unwrap();
        assert_eq!(out.reports.len(), 4);
        for r in &out.reports {
            assert_eq!(r.spend, Cents::ZERO);
            assert_eq!(r.increment_cost, Some(0.0));
        }
        let rates: Vec<f64> = out.reports.iter().map(|r| r.conversion).collect();
        for r in &rates {
            assert!((r - rates[0]).abs() < 0.05);
        }
    }

    #[test]
    fn budgets_hold_and_runs_repeat() {
        let s = sim();
        let cfg = config(4000, Cents(50_000));
        let a = run_ab(&s, &GroundTruth, &cfg).unwrap();
        let b = run_ab(&s, &GroundTruth, &cfg).unwrap();
        assert_eq!(a.reports, b.reports);
        assert_eq!(a.decisions, b.decisions);
        for r in &a.reports {
            assert!(r.spend <= cfg.budget);
        }
        assert_eq!(a.reports[0].spend, Cents::ZERO);
        assert_eq!(a.decisions.len(), 1000);
    }

    #[test]
    fn unlimited_budget_covers_everyone_at_full_gate() {
        let s = sim();
        let mut cfg = config(400, Cents(10_000_000));
        cfg.policies = vec![
            PolicyKind::NonAllocation,
            PolicyKind::AllAllocation,
            PolicyKind::IidnMckp { gamma: 1.0 },
        ];
        cfg.users = 300;
        let out = run_ab(&s, &GroundTruth, &cfg).unwrap();
        assert_eq!(out.dual.as_ref().unwrap().alpha, 0.0);
        // Truth is strictly increasing in the amount, so α = 0 always pays out.
        assert!(out.decisions.iter().all(|d| d.j > 0));
    }

    #[test]
    fn sweep_matches_the_ab_arm_and_starts_natural() {
        let s = sim();
        let cfg = config(4000, Cents(40_000));
        let ab = run_ab(&s, &GroundTruth, &cfg).unwrap();
        let rows = budget_sweep(&s, &GroundTruth, &cfg, &[Cents::ZERO, Cents(40_000)]).unwrap();
        let natural = ab.reports.iter().find(|r| r.policy == "Non-allocation").unwrap();
        assert_eq!(rows[0].spend, Cents::ZERO);
        assert_eq!(rows[0].increment_cost, Some(0.0));
        let mckp = ab.reports.iter().find(|r| r.policy == "IIDN-MCKP").unwrap();
        assert_eq!(rows[1].buyers, mckp.buyers);
        assert_eq!(rows[1].spend, mckp.spend);
        assert!(natural.users == rows[0].users);
        assert!(budget_sweep(&s, &GroundTruth, &cfg, &[Cents(10), Cents(5)]).is_err());
    }

    #[test]
    fn csv_and_tables_render() {
        let r = RunReport {
            policy: "All-allocation".into(),
            users: 10,
            buyers: 2,
            conversion: 0.2,
            spend: Cents(1234),
            increment_cost: None,
            seed: 1,
        };
        let mut buf = Vec::new();
        write_reports_csv(&mut buf, std::slice::from_ref(&r)).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("{REPORT_HEADER}\nAll-allocation,10,2,0.200000,12.34,NA,1\n")
        );
        assert!(render_reports(&[r]).contains("20.00%"));
    }
}
