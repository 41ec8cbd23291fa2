//! Latent user population: segment mixture, ground-truth intents, static features.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{stream_rng, Stream};
use crate::error::{Error, Result};
use crate::money::Cents;
use crate::nn::sigmoid;

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// One segment of the mixture. Every `[lo, hi]` range is sampled uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub name: String,
    pub weight: f64,
    /// Conditional purchase probability with no coupon.
    pub base_purchase: [f64; 2],
    /// Purchase-logit increase per currency unit of coupon.
    pub sensitivity: [f64; 2],
    /// Staying probability with no coupon.
    pub base_stay: [f64; 2],
    /// Staying-logit increase per currency unit (kept small).
    pub stay_sensitivity: [f64; 2],
}

impl SegmentSpec {
    fn new(name: &str, weight: f64, bp: [f64; 2], sens: [f64; 2], bs: [f64; 2], ss: [f64; 2]) -> Self {
        SegmentSpec {
            name: name.into(),
            weight,
            base_purchase: bp,
            sensitivity: sens,
            base_stay: bs,
            stay_sensitivity: ss,
        }
    }
}

/// Amount-exposure mixture used to assign coupons when generating labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExposurePolicy {
    /// Probability of no coupon.
    pub null_prob: f64,
    /// Amounts drawn uniformly otherwise.
    pub amounts: Vec<Cents>,
}

impl Default for ExposurePolicy {
    fn default() -> Self {
        ExposurePolicy {
            null_prob: 0.4,
            amounts: vec![Cents(100), Cents(200), Cents(300), Cents(500)],
        }
    }
}

impl ExposurePolicy {
    /// Always the same amount.
    pub fn fixed(c: Cents) -> Self {
        ExposurePolicy {
            null_prob: if c == Cents::ZERO { 1.0 } else { 0.0 },
            amounts: vec![c],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.null_prob) {
            return Err(Error::config("exposure null_prob must lie in [0, 1]"));
        }
        if self.null_prob < 1.0 && self.amounts.is_empty() {
            return Err(Error::config("exposure needs amounts unless null_prob = 1"));
        }
        if self.amounts.iter().any(|c| c.is_negative()) {
            return Err(Error::config("exposure amounts must be non-negative"));
        }
        Ok(())
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Cents {
        let u: f64 = rng.random();
        if u < self.null_prob || self.amounts.is_empty() {
            Cents::ZERO
        } else {
            self.amounts[rng.random_range(0..self.amounts.len())]
        }
    }

    /// `(amount, probability)` pairs.
    pub fn support(&self) -> Vec<(Cents, f64)> {
        let mut out = vec![(Cents::ZERO, self.null_prob)];
        let each = (1.0 - self.null_prob) / self.amounts.len().max(1) as f64;
        out.extend(self.amounts.iter().map(|&c| (c, each)));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationSpec {
    pub segments: Vec<SegmentSpec>,
    pub static_slots: usize,
    pub static_cardinality: usize,
    /// Static slots that carry noisy copies of the latent traits; the rest are noise.
    pub informative_slots: usize,
    /// Probability an informative slot is replaced by a random value.
    pub static_noise: f64,
    /// If set, purchase logits are shifted so the mean pay rate under
    /// `exposure` matches this value.
    pub target_pay_rate: Option<f64>,
    pub exposure: ExposurePolicy,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            segments: vec![
                SegmentSpec::new(
                    "insensitive-loyal",
                    0.30,
                    [0.15, 0.40],
                    [0.05, 0.12],
                    [0.75, 0.95],
                    [0.0, 0.03],
                ),
                SegmentSpec::new(
                    "sensitive-leaver",
                    0.30,
                    [0.04, 0.15],
                    [0.35, 0.70],
                    [0.15, 0.45],
                    [0.05, 0.15],
                ),
                SegmentSpec::new(
                    "never-buyer",
                    0.20,
                    [0.002, 0.01],
                    [0.03, 0.08],
                    [0.30, 0.70],
                    [0.0, 0.02],
                ),
                SegmentSpec::new("casual", 0.20, [0.06, 0.20], [0.12, 0.30], [0.45, 0.80], [0.02, 0.06]),
            ],
            static_slots: 89,
            static_cardinality: 8,
            informative_slots: 12,
            static_noise: 0.35,
            target_pay_rate: Some(0.10),
            exposure: ExposurePolicy::default(),
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::config("population needs at least one segment"));
        }
        let total: f64 = self.segments.iter().map(|s| s.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("segment weights sum to {total}, expected 1")));
        }
        for s in &self.segments {
            let prob = [("base_purchase", s.base_purchase), ("base_stay", s.base_stay)];
            for (name, [lo, hi]) in prob {
                if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
                    return Err(Error::config(format!(
                        "segment `{}`: {name} must satisfy 0 < lo ≤ hi < 1",
                        s.name
                    )));
                }
            }
            for (name, [lo, hi]) in [("sensitivity", s.sensitivity), ("stay_sensitivity", s.stay_sensitivity)] {
                if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                    return Err(Error::config(format!(
                        "segment `{}`: {name} must satisfy 0 ≤ lo ≤ hi",
                        s.name
                    )));
                }
            }
            if s.weight < 0.0 {
                return Err(Error::config(format!("segment `{}`: negative weight", s.name)));
            }
        }
        if self.static_cardinality == 0 || self.informative_slots > self.static_slots {
            return Err(Error::config(
                "static features: cardinality ≥ 1 and informative_slots ≤ static_slots",
            ));
        }
        if !(0.0..=1.0).contains(&self.static_noise) {
            return Err(Error::config("static_noise must lie in [0, 1]"));
        }
        if let Some(t) = self.target_pay_rate {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::config("target_pay_rate must lie in (0, 1)"));
            }
        }
        self.exposure.validate()
    }
}

/// A user with known ground-truth intents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentUser {
    pub id: u64,
    pub segment: usize,
    /// Purchase logit at `c = 0`, after calibration.
    pub purchase_logit: f64,
    pub sensitivity: f64,
    pub stay_logit: f64,
    pub stay_sensitivity: f64,
    pub h: Vec<u16>,
}

impl LatentUser {
    pub fn base_purchase(&self) -> f64 {
        sigmoid(self.purchase_logit)
    }

    pub fn base_stay(&self) -> f64 {
        sigmoid(self.stay_logit)
    }

    /// Ground-truth `pS*(c)`.
    pub fn p_stay(&self, c: Cents) -> f64 {
        sigmoid(self.stay_logit + self.stay_sensitivity * c.units())
    }

    /// Ground-truth `pPS*(c)`.
    pub fn p_pay_given_stay(&self, c: Cents) -> f64 {
        sigmoid(self.purchase_logit + self.sensitivity * c.units())
    }

    /// Ground-truth `pP*(c) = pS*(c) · pPS*(c)`.
    pub fn p_pay(&self, c: Cents) -> f64 {
        self.p_stay(c) * self.p_pay_given_stay(c)
    }
}

struct Draw {
    segment: usize,
    u: [f64; 4],
}

/// A seeded, lazily generated population: user `i` depends only on
/// `(seed, i)`, so any subset can be generated independently.
#[derive(Debug, Clone)]
pub struct Population {
    spec: PopulationSpec,
    seed: u64,
    shift: f64,
}

const CALIBRATION_USERS: u64 = 20_000;

impl Population {
    pub fn new(spec: PopulationSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut pop = Population { spec, seed, shift: 0.0 };
        if let Some(target) = pop.spec.target_pay_rate {
            pop.shift = pop.calibrate(target)?;
        }
        Ok(pop)
    }

    pub fn spec(&self) -> &PopulationSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Purchase-logit shift applied to every user.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    fn draw(&self, i: u64) -> Draw {
        let mut rng = stream_rng(self.seed, Stream::Latent, i);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut segment = self.spec.segments.len() - 1;
        for (k, s) in self.spec.segments.iter().enumerate() {
            acc += s.weight;
            if u < acc {
                segment = k;
                break;
            }
        }
        Draw {
            segment,
            u: [rng.random(), rng.random(), rng.random(), rng.random()],
        }
    }

    fn latents(&self, d: &Draw) -> (f64, f64, f64, f64) {
        let s = &self.spec.segments[d.segment];
        let lerp = |[lo, hi]: [f64; 2], u: f64| lo + (hi - lo) * u;
        (
            logit(lerp(s.base_purchase, d.u[0])),
            lerp(s.sensitivity, d.u[1]),
            logit(lerp(s.base_stay, d.u[2])),
            lerp(s.stay_sensitivity, d.u[3]),
        )
    }

    /// Mean pay rate under the exposure mixture for a given logit shift.
    fn pay_rate(&self, draws: &[Draw], shift: f64) -> f64 {
        let support = self.spec.exposure.support();
        let total: f64 = draws
            .iter()
            .map(|d| {
                let (pl, sens, sl, ss) = self.latents(d);
                support
                    .iter()
                    .map(|&(c, w)| w * sigmoid(sl + ss * c.units()) * sigmoid(pl + shift + sens * c.units()))
                    .sum::<f64>()
            })
            .sum();
        total / draws.len() as f64
    }

    fn calibrate(&self, target: f64) -> Result<f64> {
        let draws: Vec<Draw> = (0..CALIBRATION_USERS).map(|i| self.draw(u64::MAX - i)).collect();
        let (mut lo, mut hi) = (-20.0, 20.0);
        if self.pay_rate(&draws, lo) > target || self.pay_rate(&draws, hi) < target {
            return Err(Error::config(format!(
                "target_pay_rate {target} is unreachable for this population"
            )));
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.pay_rate(&draws, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// User `i` of this population.
    pub fn user(&self, i: u64) -> LatentUser {
        let d = self.draw(i);
        let (pl, sensitivity, stay_logit, stay_sensitivity) = self.latents(&d);
        let mut rng = stream_rng(self.seed, Stream::Static, i);
        let card = self.spec.static_cardinality as u16;
        let seg = &self.spec.segments[d.segment];
        // Position of each trait within its segment's range, plus the segment
        // itself; informative slots cycle through these with added noise.
        let signals = [
            d.u[0],
            d.u[1],
            d.u[2],
            (d.segment as f64 + 0.5) / self.spec.segments.len() as f64,
            // Where the user's sensitivity sits on an absolute scale.
            (seg.sensitivity[0] + (seg.sensitivity[1] - seg.sensitivity[0]) * d.u[1]).min(1.0),
        ];
        let h = (0..self.spec.static_slots)
            .map(|slot| {
                if slot < self.spec.informative_slots && rng.random::<f64>() >= self.spec.static_noise {
                    let v = signals[slot % signals.len()];
                    ((v * card as f64) as u16).min(card - 1)
                } else {
                    rng.random_range(0..card)
                }
            })
            .collect();
        LatentUser {
            id: i,
            segment: d.segment,
            purchase_logit: pl + self.shift,
            sensitivity,
            stay_logit,
            stay_sensitivity,
            h,
        }
    }

    /// Users `offset .. offset + n`.
    pub fn users(&self, offset: u64, n: usize) -> Vec<LatentUser> {
        (offset..offset + n as u64).map(|i| self.user(i)).collect()
    }
}

/// Convenience: the first `n` users of a freshly seeded population.
pub fn gen_population(spec: &PopulationSpec, n: usize, seed: u64) -> Result<Vec<LatentUser>> {
    Ok(Population::new(spec.clone(), seed)?.users(0, n))
}

/// Draws `(y_s, y_p)` for one exposure; `y_p` is only possible when `y_s`.
pub fn sample_labels<R: Rng + ?Sized>(user: &LatentUser, c: Cents, rng: &mut R) -> (bool, bool) {
    outcome(user, c, rng.random(), rng.random())
}

/// Outcome from pre-drawn uniforms, for common-random-number comparisons.
pub fn outcome(user: &LatentUser, c: Cents, u_stay: f64, u_pay: f64) -> (bool, bool) {
    let y_s = u_stay < user.p_stay(c);
    let y_p = y_s && u_pay < user.p_pay_given_stay(c);
    (y_s, y_p)
}

/// Seeded RNG for ad-hoc use outside the per-user streams.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_segment(sens: [f64; 2]) -> PopulationSpec {
        PopulationSpec {
            segments: vec![SegmentSpec::new("only", 1.0, [0.2, 0.2], sens, [0.6, 0.6], [0.0, 0.0])],
            target_pay_rate: None,
            ..Default::default()
        }
    }

    #[test]
    fn degenerate_segment_gives_identical_latents() {
        let users = gen_population(&one_segment([0.3, 0.3]), 50, 1).unwrap();
        for u in &users {
            assert_eq!(u.purchase_logit, users[0].purchase_logit);
            assert_eq!(u.sensitivity, users[0].sensitivity);
            assert_eq!(u.stay_logit, users[0].stay_logit);
        }
    }

    #[test]
    fn zero_sensitivity_means_flat_purchase_curve() {
        let u = &gen_population(&one_segment([0.0, 0.0]), 1, 1).unwrap()[0];
        for c in [100, 200, 500, 10_000] {
            assert_eq!(u.p_pay(Cents(c)), u.p_pay(Cents::ZERO));
        }
    }

    #[test]
    fn segment_shares_track_weights() {
        let spec = PopulationSpec::default();
        let users = gen_population(&spec, 10_000, 3).unwrap();
        for (k, s) in spec.segments.iter().enumerate() {
            let share = users.iter().filter(|u| u.segment == k).count() as f64 / 1e4;
            assert!((share - s.weight).abs() < 0.02, "{}: {share}", s.name);
        }
    }

    #[test]
    fn weights_must_sum_to_one() {
        let mut spec = PopulationSpec::default();
        spec.segments[0].weight += 1e-6;
        assert!(matches!(Population::new(spec, 1), Err(Error::Config(_))));
    }

    #[test]
    fn ground_truth_is_monotone_and_factored() {
        let users = gen_population(&PopulationSpec::default(), 500, 5).unwrap();
        let menu = [0, 100, 200, 300, 500].map(Cents);
        for u in &users {
            for w in menu.windows(2) {
                assert!(u.p_pay(w[1]) >= u.p_pay(w[0]));
                assert!(u.p_stay(w[1]) >= u.p_stay(w[0]));
            }
            for c in menu {
                assert_eq!(u.p_pay(c), u.p_stay(c) * u.p_pay_given_stay(c));
            }
        }
    }

    #[test]
    fn calibration_hits_target_pay_rate() {
        let pop = Population::new(PopulationSpec::default(), 9).unwrap();
        let support = pop.spec().exposure.support();
        let users = pop.users(0, 20_000);
        let rate: f64 = users
            .iter()
            .map(|u| support.iter().map(|&(c, w)| w * u.p_pay(c)).sum::<f64>())
            .sum::<f64>()
            / users.len() as f64;
        assert!((rate - 0.10).abs() < 0.005, "{rate}");
    }

    #[test]
    fn users_are_reproducible_in_any_order() {
        let pop = Population::new(PopulationSpec::default(), 4).unwrap();
        let forward = pop.users(0, 20);
        let backward: Vec<_> = (0..20).rev().map(|i| pop.user(i)).collect();
        assert!(forward.iter().eq(backward.iter().rev()));
        assert_eq!(forward[3].h.len(), 89);
        assert!(forward.iter().all(|u| u.h.iter().all(|&v| v < 8)));
    }

    #[test]
    fn pay_implies_stay_and_zero_stay_means_no_labels() {
        let mut u = gen_population(&PopulationSpec::default(), 1, 2).unwrap().remove(0);
        let mut rng = seeded(1);
        for _ in 0..2_000 {
            let (s, p) = sample_labels(&u, Cents(300), &mut rng);
            assert!(!p || s);
        }
        u.stay_logit = f64::NEG_INFINITY;
        u.stay_sensitivity = 0.0;
        for _ in 0..200 {
            assert_eq!(sample_labels(&u, Cents(500), &mut rng), (false, false));
        }
    }

    #[test]
    fn empirical_pay_rate_matches_probability() {
        // pS* = 1 and pPS* = 0.3 exactly.
        let u = LatentUser {
            id: 0,
            segment: 0,
            purchase_logit: logit(0.3),
            sensitivity: 0.0,
            stay_logit: f64::INFINITY,
            stay_sensitivity: 0.0,
            h: vec![],
        };
        assert!((u.p_pay(Cents::ZERO) - 0.3).abs() < 1e-15);
        let mut rng = seeded(11);
        let pays = (0..100_000)
            .filter(|_| sample_labels(&u, Cents::ZERO, &mut rng).1)
            .count();
        let rate = pays as f64 / 1e5;
        assert!((0.295..=0.305).contains(&rate), "{rate}");
    }
}
