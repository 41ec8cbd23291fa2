//! Budget-constrained coupon allocation: γ-gating, the priced argmax rule,
//! dual estimation and an exact integer-cent budget ledger.

mod dual;
mod oracle;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iidn::MenuScore;
use crate::money::Cents;

pub use dual::{estimate_dual, projected_spend, DualState, DUAL_SCHEMA, DUAL_TOLERANCE};
pub use oracle::{fractional_optimum, integral_optimum, lp_oracle, LpBounds, MAX_ORACLE_MENU, MAX_ORACLE_USERS};

/// One user's menu of `(amount, v = pP, s = pS)`, null coupon first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredUser {
    pub user_id: u64,
    pub menu: Vec<MenuScore>,
}

impl ScoredUser {
    pub fn validate(&self) -> Result<()> {
        validate_menu(&self.menu)
    }

    /// Value of coupon `j`.
    pub fn v(&self, j: usize) -> f64 {
        self.menu[j].p_pay
    }
}

/// Checks `c_0 = 0`, strictly increasing amounts and probabilities in `[0, 1]`.
pub fn validate_menu(menu: &[MenuScore]) -> Result<()> {
    let first = menu.first().ok_or_else(|| Error::contract("empty coupon menu"))?;
    if first.amount != Cents::ZERO {
        return Err(Error::contract(format!(
            "menu must start with the null coupon, got {}",
            first.amount
        )));
    }
    for w in menu.windows(2) {
        if w[1].amount <= w[0].amount {
            return Err(Error::contract(format!(
                "menu amounts must be strictly increasing ({} then {})",
                w[0].amount, w[1].amount
            )));
        }
    }
    for m in menu {
        for (name, p) in [("pP", m.p_pay), ("pS", m.p_stay)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::contract(format!(
                    "{name} = {p} at amount {} is outside [0, 1]",
                    m.amount
                )));
            }
        }
    }
    Ok(())
}

/// Users × menus × budget.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationInstance {
    pub users: Vec<ScoredUser>,
    pub budget: Cents,
    pub gamma: f64,
}

impl AllocationInstance {
    pub fn validate(&self) -> Result<()> {
        if self.budget.is_negative() {
            return Err(Error::contract(format!("budget {} is negative", self.budget)));
        }
        validate_gamma(self.gamma)?;
        self.users.iter().try_for_each(ScoredUser::validate)
    }
}

fn validate_gamma(gamma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::contract(format!("gamma = {gamma} is outside [0, 1]")))
    }
}

/// Eligible iff the no-coupon staying probability is at most `gamma`.
pub fn gate(user: &ScoredUser, gamma: f64) -> bool {
    user.menu.first().is_some_and(|m| m.p_stay <= gamma)
}

/// `argmax_j v_j − α·c_j` with ties going to the cheaper coupon.
pub fn choose(menu: &[MenuScore], alpha: f64) -> Result<usize> {
    best_affordable(menu, alpha, None).ok_or_else(|| Error::contract("empty coupon menu"))
}

/// Like [`choose`], restricted to amounts `≤ cap` when a cap is given.
fn best_affordable(menu: &[MenuScore], alpha: f64, cap: Option<Cents>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, m) in menu.iter().enumerate() {
        if cap.is_some_and(|cap| m.amount > cap) {
            continue;
        }
        let score = m.p_pay - alpha * m.amount.units();
        // Amounts are ascending, so strict improvement keeps the cheaper one on ties.
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((j, score));
        }
    }
    best.map(|(j, _)| j)
}

/// One irrevocable allocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub arrival: u64,
    pub user_id: u64,
    pub gated: bool,
    pub j: usize,
    pub amount: Cents,
    pub spent_after: Cents,
}

/// Spend tracker that refuses to go over budget.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetLedger {
    budget: Cents,
    spent: Cents,
    log: Vec<Decision>,
}

impl BudgetLedger {
    pub fn new(budget: Cents) -> Result<Self> {
        if budget.is_negative() {
            return Err(Error::contract(format!("budget {budget} is negative")));
        }
        Ok(BudgetLedger {
            budget,
            spent: Cents::ZERO,
            log: Vec::new(),
        })
    }

    pub fn budget(&self) -> Cents {
        self.budget
    }

    pub fn spent(&self) -> Cents {
        self.spent
    }

    pub fn remaining(&self) -> Cents {
        self.budget - self.spent
    }

    pub fn log(&self) -> &[Decision] {
        &self.log
    }

    pub fn into_log(self) -> Vec<Decision> {
        self.log
    }

    pub fn commit(&mut self, arrival: u64, user_id: u64, gated: bool, j: usize, amount: Cents) -> Result<Decision> {
        if amount.is_negative() || amount > self.remaining() {
            return Err(Error::BudgetBreach(format!(
                "spending {amount} with {} of {} left",
                self.remaining(),
                self.budget
            )));
        }
        self.spent += amount;
        let d = Decision {
            arrival,
            user_id,
            gated,
            j,
            amount,
            spent_after: self.spent,
        };
        self.log.push(d);
        Ok(d)
    }
}

/// The online decision loop state: price, gate and ledger.
#[derive(Debug, Clone)]
pub struct OnlineAllocator {
    alpha: f64,
    gamma: f64,
    ledger: BudgetLedger,
    arrivals: u64,
}

impl OnlineAllocator {
    pub fn new(dual: &DualState, budget: Cents, gamma: f64) -> Result<Self> {
        validate_gamma(gamma)?;
        dual.validate()?;
        Ok(OnlineAllocator {
            alpha: dual.alpha,
            gamma,
            ledger: BudgetLedger::new(budget)?,
            arrivals: 0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Swaps in a re-estimated price; decisions already made stand.
    pub fn set_dual(&mut self, dual: &DualState) -> Result<()> {
        dual.validate()?;
        self.alpha = dual.alpha;
        Ok(())
    }

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> BudgetLedger {
        self.ledger
    }

    /// Gate, price, then fall back to the best affordable coupon.
    pub fn decide(&mut self, user: &ScoredUser) -> Result<Decision> {
        user.validate()?;
        let arrival = self.arrivals;
        self.arrivals += 1;
        if !gate(user, self.gamma) {
            return self.ledger.commit(arrival, user.user_id, true, 0, Cents::ZERO);
        }
        let mut j = choose(&user.menu, self.alpha)?;
        if user.menu[j].amount > self.ledger.remaining() {
            // The null coupon is always affordable.
            j = best_affordable(&user.menu, self.alpha, Some(self.ledger.remaining())).unwrap_or(0);
        }
        self.ledger.commit(arrival, user.user_id, false, j, user.menu[j].amount)
    }
}

/// Runs the stream through a fresh allocator and returns the ledger.
pub fn allocate_online<'a, I>(users: I, dual: &DualState, budget: Cents, gamma: f64) -> Result<BudgetLedger>
where
    I: IntoIterator<Item = &'a ScoredUser>,
{
    let mut alloc = OnlineAllocator::new(dual, budget, gamma)?;
    for u in users {
        alloc.decide(u)?;
    }
    Ok(alloc.into_ledger())
}

/// `Σ_i v_{i, j_i}` for a decision log aligned with `users`.
pub fn objective(users: &[ScoredUser], log: &[Decision]) -> f64 {
    users.iter().zip(log).map(|(u, d)| u.v(d.j)).sum()
}

pub const DECISION_HEADER: &str = "arrival,user_id,gated,amount,spent_after";

pub fn write_decisions<W: Write>(mut w: W, log: &[Decision]) -> std::io::Result<()> {
    writeln!(w, "{DECISION_HEADER}")?;
    for d in log {
        writeln!(
            w,
            "{},{},{},{},{}",
            d.arrival, d.user_id, d.gated as u8, d.amount, d.spent_after
        )?;
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn menu(v: &[f64], c: &[i64]) -> Vec<MenuScore> {
        v.iter()
            .zip(c)
            .map(|(&v, &c)| MenuScore {
                amount: Cents(c * 100),
                p_stay: 0.3,
                p_pay: v,
            })
            .collect()
    }

    pub(crate) fn user(id: u64, v: &[f64], c: &[i64]) -> ScoredUser {
        ScoredUser {
            user_id: id,
            menu: menu(v, c),
        }
    }

    #[test]
    fn gate_compares_no_coupon_stay() {
        let mut u = user(0, &[0.1, 0.2], &[0, 1]);
        u.menu[0].p_stay = 0.4;
        u.menu[1].p_stay = 0.9;
        assert!(gate(&u, 0.5));
        assert!(gate(&u, 1.0));
        assert!(!gate(&u, 0.0));
        u.menu[0].p_stay = 0.0;
        assert!(gate(&u, 0.0));
    }

    #[test]
    fn choose_worked_examples() {
        let m = menu(&[0.10, 0.20, 0.22], &[0, 1, 2]);
        assert_eq!(choose(&m, 0.05).unwrap(), 1);
        assert_eq!(choose(&m, 0.0).unwrap(), 2);
        assert_eq!(choose(&m, 1.0).unwrap(), 0);
        assert!(choose(&[], 0.1).is_err());
    }

    #[test]
    fn ties_go_to_the_cheaper_coupon() {
        // 0.2 − 0.1·1 = 0.1 = v_0
        let m = menu(&[0.1, 0.2], &[0, 1]);
        assert_eq!(choose(&m, 0.1).unwrap(), 0);
        let flat = menu(&[0.3, 0.3, 0.3], &[0, 1, 2]);
        assert_eq!(choose(&flat, 0.0).unwrap(), 0);
    }

    #[test]
    fn menu_validation() {
        assert!(validate_menu(&menu(&[0.1, 0.2], &[0, 1])).is_ok());
        assert!(validate_menu(&menu(&[0.1, 0.2], &[1, 2])).is_err());
        assert!(validate_menu(&menu(&[0.1, 0.2], &[0, 0])).is_err());
        assert!(validate_menu(&menu(&[0.1, 1.2], &[0, 1])).is_err());
        assert!(validate_menu(&[]).is_err());
    }

    #[test]
    fn affordability_fallback() {
        let dual = DualState::fixed(0.0);
        let u = user(0, &[0.1, 0.2, 0.25, 0.3], &[0, 1, 3, 5]);
        let ledger = allocate_online([&u], &dual, Cents(300), 1.0).unwrap();
        assert_eq!(ledger.log()[0].amount, Cents(300));
        let ledger = allocate_online([&u], &dual, Cents(50), 1.0).unwrap();
        assert_eq!(ledger.log()[0].j, 0);
    }

    #[test]
    fn gated_users_get_nothing() {
        let users: Vec<_> = (0..5)
            .map(|i| {
                let mut u = user(i, &[0.1, 0.5], &[0, 1]);
                u.menu[0].p_stay = 0.8;
                u
            })
            .collect();
        let ledger = allocate_online(&users, &DualState::fixed(0.0), Cents(10_000), 0.5).unwrap();
        assert_eq!(ledger.spent(), Cents::ZERO);
        assert!(ledger.log().iter().all(|d| d.gated && d.j == 0));
    }

    #[test]
    fn ledger_refuses_overspend() {
        let mut l = BudgetLedger::new(Cents(100)).unwrap();
        l.commit(0, 0, false, 1, Cents(60)).unwrap();
        assert!(matches!(
            l.commit(1, 1, false, 1, Cents(60)),
            Err(Error::BudgetBreach(_))
        ));
        assert_eq!(l.spent(), Cents(60));
        assert_eq!(l.log().len(), 1);
        assert!(BudgetLedger::new(Cents(-1)).is_err());
    }

    #[test]
    fn decision_csv() {
        let u = user(9, &[0.1, 0.3], &[0, 2]);
        let ledger = allocate_online([&u], &DualState::fixed(0.0), Cents(500), 1.0).unwrap();
        let mut buf = Vec::new();
        write_decisions(&mut buf, ledger.log()).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("{DECISION_HEADER}\n0,9,0,2.00,2.00\n")
        );
    }

    fn arb_menu() -> impl Strategy<Value = Vec<MenuScore>> {
        (1usize..6).prop_flat_map(|n| {
            (
                prop::collection::vec(0.0f64..1.0, n),
                prop::collection::btree_set(1i64..2000, n - 1),
            )
                .prop_map(|(v, c)| {
                    let amounts = std::iter::once(0).chain(c);
                    v.iter()
                        .zip(amounts)
                        .map(|(&v, c)| MenuScore {
                            amount: Cents(c),
                            p_stay: 0.5,
                            p_pay: v,
                        })
                        .collect()
                })
        })
    }

    proptest! {
        #[test]
        fn argmax_is_invariant_to_joint_scaling(m in arb_menu(), alpha in 0.0f64..2.0, k in -8i32..8) {
            // Powers of two scale exactly, so ties survive too.
            let lambda = 2f64.powi(k);
            let scaled: Vec<MenuScore> = m.iter().map(|s| MenuScore { p_pay: s.p_pay * lambda, ..*s }).collect();
            prop_assert_eq!(choose(&m, alpha).unwrap(), best_affordable(&scaled, alpha * lambda, None).unwrap());
        }

        #[test]
        fn choice_is_optimal(m in arb_menu(), alpha in 0.0f64..2.0) {
            let j = choose(&m, alpha).unwrap();
            let best = m[j].p_pay - alpha * m[j].amount.units();
            for (i, s) in m.iter().enumerate() {
                let score = s.p_pay - alpha * s.amount.units();
                prop_assert!(score <= best);
                if i < j {
                    prop_assert!(score < best);
                }
            }
        }

        #[test]
        fn online_spend_never_exceeds_budget(
            menus in prop::collection::vec(arb_menu(), 1..40),
            budget in 0i64..20_000,
            alpha in 0.0f64..0.5,
        ) {
            let users: Vec<ScoredUser> = menus.into_iter().enumerate()
                .map(|(i, menu)| ScoredUser { user_id: i as u64, menu })
                .collect();
            let ledger = allocate_online(&users, &DualState::fixed(alpha), Cents(budget), 1.0).unwrap();
            prop_assert!(ledger.spent() <= Cents(budget));
            prop_assert_eq!(ledger.log().len(), users.len());
            let total: Cents = ledger.log().iter().map(|d| d.amount).sum();
            prop_assert_eq!(total, ledger.spent());
        }
    }
}
