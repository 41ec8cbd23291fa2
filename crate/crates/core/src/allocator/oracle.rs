//! Offline bounds for small instances: the fractional LP optimum via the
//! dominance greedy, and the integral optimum via a Pareto-frontier DP.

use super::{gate, AllocationInstance};
use crate::error::{Error, Result};

pub const MAX_ORACLE_USERS: usize = 12;
/// Paid coupons per menu (the null coupon is extra).
pub const MAX_ORACLE_MENU: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpBounds {
    pub fractional: f64,
    pub integral: f64,
}

/// Items a user may pick as `(cost in cents, value)`; gated users get only the null.
fn options(inst: &AllocationInstance) -> Vec<Vec<(i64, f64)>> {
    inst.users
        .iter()
        .map(|u| {
            let all = u.menu.iter().map(|m| (m.amount.0, m.p_pay));
            if gate(u, inst.gamma) {
                all.collect()
            } else {
                all.take(1).collect()
            }
        })
        .collect()
}

/// Upper concave envelope of a cost-sorted item list, starting at the null item.
fn hull(items: &[(i64, f64)]) -> Vec<(i64, f64)> {
    let mut h: Vec<(i64, f64)> = vec![items[0]];
    for &p in &items[1..] {
        if p.1 <= h.last().unwrap().1 {
            continue;
        }
        while h.len() >= 2 {
            let (a, b) = (h[h.len() - 2], h[h.len() - 1]);
            // Drop b when it sits on or below the chord a → p.
            let cross = (b.0 - a.0) as f64 * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) as f64;
            if cross >= 0.0 {
                h.pop();
            } else {
                break;
            }
        }
        h.push(p);
    }
    h
}

/// LP relaxation optimum of the instance.
pub fn fractional_optimum(inst: &AllocationInstance) -> Result<f64> {
    inst.validate()?;
    let opts = options(inst);
    let mut value: f64 = opts.iter().map(|o| o[0].1).sum();
    let mut steps: Vec<(f64, i64, f64)> = Vec::new();
    for o in &opts {
        let h = hull(o);
        for w in h.windows(2) {
            let (dc, dv) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            steps.push((dv / dc as f64, dc, dv));
        }
    }
    // Concavity keeps each user's steps in order under a stable sort.
    steps.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut left = inst.budget.0;
    for (_, dc, dv) in steps {
        if left <= 0 {
            break;
        }
        if dc <= left {
            left -= dc;
            value += dv;
        } else {
            value += dv * left as f64 / dc as f64;
            left = 0;
        }
    }
    Ok(value)
}

/// Exact best assignment for instances within the oracle size limits.
pub fn integral_optimum(inst: &AllocationInstance) -> Result<f64> {
    inst.validate()?;
    check_size(inst)?;
    let b = inst.budget.0;
    // Frontier of (spend, best value), spend ascending and value strictly ascending.
    let mut front: Vec<(i64, f64)> = vec![(0, 0.0)];
    for o in options(inst) {
        let mut next: Vec<(i64, f64)> = front
            .iter()
            .flat_map(|&(c, v)| o.iter().map(move |&(dc, dv)| (c + dc, v + dv)))
            .filter(|&(c, _)| c <= b)
            .collect();
        next.sort_by(|x, y| x.0.cmp(&y.0).then(y.1.total_cmp(&x.1)));
        front.clear();
        for p in next {
            if front.last().is_none_or(|l| p.1 > l.1) {
                front.push(p);
            }
        }
    }
    Ok(front.last().map_or(0.0, |p| p.1))
}

fn check_size(inst: &AllocationInstance) -> Result<()> {
    let n = inst.users.iter().map(|u| u.menu.len() - 1).max().unwrap_or(0);
    if inst.users.len() > MAX_ORACLE_USERS || n > MAX_ORACLE_MENU {
        return Err(Error::Capability(format!(
            "integral oracle supports at most {MAX_ORACLE_USERS} users and {MAX_ORACLE_MENU} paid coupons \
             (got {} and {n}); use fractional_optimum for an upper bound",
            inst.users.len()
        )));
    }
    Ok(())
}

/// Both bounds; the integral one needs a tiny instance.
pub fn lp_oracle(inst: &AllocationInstance) -> Result<LpBounds> {
    Ok(LpBounds {
        integral: integral_optimum(inst)?,
        fractional: fractional_optimum(inst)?,
    })
}
