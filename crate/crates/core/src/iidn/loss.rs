//! Binary cross-entropy for the staying and purchasing heads.

use super::decoder::OutputGrads;
use super::features::IntentScores;
use crate::error::{Error, Result};

pub const PROB_CLIP: f64 = 1e-12;

pub fn clip_prob(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

fn in_clip_range(p: f64) -> bool {
    (PROB_CLIP..=1.0 - PROB_CLIP).contains(&p)
}

/// Per-sample binary cross-entropy on a clipped probability.
pub fn bce(p: f64, y: bool) -> f64 {
    let p = clip_prob(p);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub stay: f64,
    pub pay: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(stay: f64, pay: f64) -> Self {
        LossBreakdown {
            stay,
            pay,
            total: stay + pay,
        }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Same value as `bce` on each head, computed from the pre-sigmoid logits
/// `(stay, pay)` so that rounding error scales with the loss itself.
pub(crate) fn sample_loss(s: &IntentScores, logits: (f64, f64), y_s: bool, y_p: bool) -> LossBreakdown {
    let (z_s, z_p) = logits;
    let stay = if in_clip_range(s.p_stay) {
        softplus(if y_s { -z_s } else { z_s })
    } else {
        bce(s.p_stay, y_s)
    };
    let pay = if !in_clip_range(s.p_pay) {
        bce(s.p_pay, y_p)
    } else if s.p_pay_given_stay.is_some() {
        if y_p {
            softplus(-z_s) + softplus(-z_p)
        } else {
            -(-s.p_pay).ln_1p()
        }
    } else {
        softplus(if y_p { -z_p } else { z_p })
    };
    LossBreakdown::new(stay, pay)
}

/// Mean staying and purchasing losses over a batch, and their sum.
pub fn loss(batch: &[(IntentScores, bool, bool)]) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::contract("loss over an empty batch"));
    }
    let n = batch.len() as f64;
    let (mut ls, mut lp) = (0.0, 0.0);
    for (s, ys, yp) in batch {
        ls += bce(s.p_stay, *ys);
        lp += bce(s.p_pay, *yp);
    }
    Ok(LossBreakdown::new(ls / n, lp / n))
}

/// Logit-level gradients of `weight · (bce_s + bce_p)` for one sample.
pub(crate) fn output_grads(s: &IntentScores, y_s: bool, y_p: bool, weight: f64) -> OutputGrads {
    let ys = y_s as u8 as f64;
    let yp = y_p as u8 as f64;
    let mut g = OutputGrads::default();
    if in_clip_range(s.p_stay) {
        g.d_stay_logit += weight * (s.p_stay - ys);
    }
    match s.p_pay_given_stay {
        Some(p_cond) => {
            if in_clip_range(s.p_pay) {
                // pP = pS·pPS; these are dL/dpP chained onto each logit,
                // simplified so nothing divides by pP.
                let common = weight * (s.p_pay - yp) / (1.0 - s.p_pay);
                g.d_stay_logit += common * (1.0 - s.p_stay);
                g.d_pay_logit += common * (1.0 - p_cond);
            }
        }
        None => {
            if in_clip_range(s.p_pay) {
                g.d_pay_logit += weight * (s.p_pay - yp);
            }
        }
    }
    g
}
