//! Behavior sessions whose event mix reveals the user's latent intents.
//!
//! The body of a session is generic browsing sprinkled with uninformative
//! intent-like events; the last few events carry the signal, with dwell
//! times that also depend on the user's propensities. A bag-of-events model
//! sees the signal diluted, an order-aware model can find it.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use super::population::LatentUser;
use crate::iidn::{Action, BehaviorEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionSpec {
    pub max_len: usize,
    /// Poisson mean of the body length is `base + per_stay · base_stay`.
    pub len_base: f64,
    pub len_per_stay: f64,
    /// Number of trailing events that reveal intent.
    pub tail_len: usize,
    /// Probability a tail event is intent-revealing rather than browsing.
    pub tail_intent: f64,
    /// Probability a body event is a random intent-like action.
    pub body_noise: f64,
    pub mean_dwell: f64,
}

impl Default for SessionSpec {
    fn default() -> Self {
        SessionSpec {
            max_len: 100,
            len_base: 3.0,
            len_per_stay: 18.0,
            tail_len: 4,
            tail_intent: 0.75,
            body_noise: 0.15,
            mean_dwell: 5.0,
        }
    }
}

const BROWSE: [(Action, f64); 7] = [
    (Action::PageView, 0.26),
    (Action::Tap, 0.16),
    (Action::Search, 0.10),
    (Action::Scroll, 0.22),
    (Action::ItemDetail, 0.14),
    (Action::ReviewRead, 0.08),
    (Action::Share, 0.04),
];

const PURCHASE: [Action; 4] = [Action::Collect, Action::Favorite, Action::AddCart, Action::CheckoutView];
const PRICE: [Action; 2] = [Action::CouponCenter, Action::PriceCompare];
const LEAVE: [Action; 2] = [Action::Back, Action::ExitHover];

fn weighted<R: Rng + ?Sized>(rng: &mut R, items: &[(Action, f64)]) -> Action {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    let mut u = rng.random::<f64>() * total;
    for &(a, w) in items {
        if u < w {
            return a;
        }
        u -= w;
    }
    items[items.len() - 1].0
}

fn pick<R: Rng + ?Sized>(rng: &mut R, items: &[Action]) -> Action {
    items[rng.random_range(0..items.len())]
}

fn dwell<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    Exp::new(1.0 / mean).expect("positive mean").sample(rng)
}

/// Generates one session for `user` from `rng`.
pub fn gen_session<R: Rng + ?Sized>(user: &LatentUser, spec: &SessionSpec, rng: &mut R) -> Vec<BehaviorEvent> {
    let base_stay = user.base_stay();
    let lambda = (spec.len_base + spec.len_per_stay * base_stay).max(1e-9);
    let body_len = Poisson::new(lambda).expect("positive rate").sample(rng) as usize;
    let tail_len = spec.tail_len.min(spec.max_len);
    let len = (body_len + tail_len).clamp(1, spec.max_len);
    let body_len = len.saturating_sub(tail_len);

    // Intent weights for the tail, each with a floor so every kind can occur.
    let purchase = user.base_purchase().sqrt();
    let price = (user.sensitivity / 0.7).min(1.0);
    let leave = 1.0 - base_stay;
    let intent = [(0usize, 0.05 + 2.0 * purchase), (1, 0.05 + price), (2, 0.05 + leave)];

    let mut events = Vec::with_capacity(len);
    for step in 0..len {
        let in_tail = step >= body_len;
        let (action, mean) = if in_tail && rng.random::<f64>() < spec.tail_intent {
            let kind = intent[{
                let total: f64 = intent.iter().map(|(_, w)| w).sum();
                let mut u = rng.random::<f64>() * total;
                let mut k = 0;
                while k + 1 < intent.len() && u >= intent[k].1 {
                    u -= intent[k].1;
                    k += 1;
                }
                k
            }]
            .0;
            match kind {
                // Engaged buyers linger on what they mean to buy.
                0 => (pick(rng, &PURCHASE), spec.mean_dwell * (0.5 + 4.0 * purchase)),
                1 => (pick(rng, &PRICE), spec.mean_dwell * (0.5 + 2.0 * price)),
                _ => (pick(rng, &LEAVE), spec.mean_dwell * 0.3),
            }
        } else if !in_tail && rng.random::<f64>() < spec.body_noise {
            let all: Vec<Action> = PURCHASE.iter().chain(&PRICE).chain(&LEAVE).copied().collect();
            (pick(rng, &all), spec.mean_dwell)
        } else {
            (weighted(rng, &BROWSE), spec.mean_dwell)
        };
        events.push(BehaviorEvent {
            action: action.id(),
            dwell: dwell(rng, mean),
            step: step as u32,
        });
    }
    events
}
