//! Labeled datasets and ground-truth tables.

use std::io::Write;

use rand::Rng;

use super::population::{outcome, ExposurePolicy, LatentUser, Population};
use super::session::{gen_session, SessionSpec};
use super::{stream_rng, Stream};
use crate::error::{Error, Result};
use crate::iidn::{BehaviorEvent, FeatureTuple, LabeledSample};
use crate::money::Cents;

/// A user as the platform sees them on arrival, together with the hidden truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Arrival {
    pub user: LatentUser,
    pub s: Vec<BehaviorEvent>,
}

impl Arrival {
    pub fn features(&self, c: Cents) -> FeatureTuple {
        FeatureTuple {
            s: self.s.clone(),
            h: self.user.h.clone(),
            c,
        }
    }
}

/// Everything needed to regenerate users, sessions and labels.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub population: Population,
    pub session: SessionSpec,
}

impl Simulator {
    pub fn seed(&self) -> u64 {
        self.population.seed()
    }

    pub fn arrival(&self, i: u64) -> Arrival {
        let user = self.population.user(i);
        let s = gen_session(&user, &self.session, &mut stream_rng(self.seed(), Stream::Session, i));
        Arrival { user, s }
    }

    pub fn arrivals(&self, offset: u64, n: usize) -> Vec<Arrival> {
        (offset..offset + n as u64).map(|i| self.arrival(i)).collect()
    }

    /// Per-user uniforms `(u_stay, u_pay)` shared by every policy that
    /// treats this user.
    pub fn outcome_uniforms(&self, i: u64) -> (f64, f64) {
        let mut rng = stream_rng(self.seed(), Stream::Outcome, i);
        (rng.random(), rng.random())
    }

    /// Realized `(stayed, paid)` for user `i` under amount `c`.
    pub fn realize(&self, user: &LatentUser, c: Cents) -> (bool, bool) {
        let (us, up) = self.outcome_uniforms(user.id);
        outcome(user, c, us, up)
    }

    /// `n` samples for users `offset..offset+n`, exposed according to `policy`.
    pub fn make_dataset(&self, policy: &ExposurePolicy, offset: u64, n: usize) -> Result<Vec<LabeledSample>> {
        if n == 0 {
            return Err(Error::contract("dataset size must be at least 1"));
        }
        policy.validate()?;
        Ok((offset..offset + n as u64)
            .map(|i| {
                let a = self.arrival(i);
                let c = policy.draw(&mut stream_rng(self.seed(), Stream::Exposure, i));
                let (y_s, y_p) = self.realize(&a.user, c);
                LabeledSample {
                    user_id: i,
                    x: a.features(c),
                    y_s,
                    y_p,
                }
            })
            .collect())
    }
}

/// `user_id,c,p_stay,p_pay` for every user and every amount in `{0} ∪ menu`.
pub fn write_ground_truth<W: Write>(mut w: W, users: &[LatentUser], menu: &[Cents]) -> std::io::Result<()> {
    writeln!(w, "user_id,c,p_stay,p_pay")?;
    let amounts = crate::iidn::menu_with_null(menu);
    for u in users {
        for &c in &amounts {
            writeln!(w, "{},{},{},{}", u.id, c, u.p_stay(c), u.p_pay(c))?;
        }
    }
    Ok(())
}

/// Label frequencies of a dataset: `(stay rate, pay rate)`.
pub fn label_rates(samples: &[LabeledSample]) -> (f64, f64) {
    let n = samples.len().max(1) as f64;
    (
        samples.iter().filter(|s| s.y_s).count() as f64 / n,
        samples.iter().filter(|s| s.y_p).count() as f64 / n,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::population::PopulationSpec;

    fn sim(seed: u64) -> Simulator {
        Simulator {
            population: Population::new(PopulationSpec::default(), seed).unwrap(),
            session: SessionSpec::default(),
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let p = ExposurePolicy::default();
        assert_eq!(
            sim(3).make_dataset(&p, 0, 300).unwrap(),
            sim(3).make_dataset(&p, 0, 300).unwrap()
        );
        assert_ne!(
            sim(3).make_dataset(&p, 0, 300).unwrap(),
            sim(4).make_dataset(&p, 0, 300).unwrap()
        );
    }

    #[test]
    fn empty_dataset_is_a_contract_error() {
        assert!(matches!(
            sim(1).make_dataset(&ExposurePolicy::default(), 0, 0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn zero_exposure_pay_rate_matches_population_mean() {
        let s = sim(8);
        let data = s.make_dataset(&ExposurePolicy::fixed(Cents::ZERO), 0, 20_000).unwrap();
        assert!(data.iter().all(|d| d.x.c == Cents::ZERO));
        let truth: f64 = s
            .population
            .users(0, 20_000)
            .iter()
            .map(|u| u.p_pay(Cents::ZERO))
            .sum::<f64>()
            / 2e4;
        let (_, pay) = label_rates(&data);
        let sd = (truth * (1.0 - truth) / 2e4).sqrt();
        assert!((pay - truth).abs() < 4.0 * sd, "{pay} vs {truth}");
    }

    #[test]
    fn labels_are_consistent_and_imbalanced() {
        let data = sim(2).make_dataset(&ExposurePolicy::default(), 0, 20_000).unwrap();
        assert!(data.iter().all(|d| !d.y_p || d.y_s));
        let (stay, pay) = label_rates(&data);
        assert!((pay - 0.10).abs() < 0.01, "{pay}");
        assert!((stay - 0.5).abs() < (pay - 0.5).abs());
    }

    #[test]
    fn empirical_frequencies_within_three_sigma() {
        let s = sim(6);
        let n = 100_000;
        let users = s.population.users(0, n);
        let c = Cents(200);
        let (mut ps, mut pp, mut ys, mut yp) = (0.0, 0.0, 0.0, 0.0);
        for u in &users {
            ps += u.p_stay(c);
            pp += u.p_pay(c);
            let (a, b) = s.realize(u, c);
            ys += a as u8 as f64;
            yp += b as u8 as f64;
        }
        let nf = n as f64;
        for (emp, exp) in [(ys, ps), (yp, pp)] {
            let p = exp / nf;
            let sd = (p * (1.0 - p) / nf).sqrt();
            assert!((emp / nf - p).abs() < 3.0 * sd, "{} vs {p}", emp / nf);
        }
    }

    #[test]
    fn ground_truth_csv_layout() {
        let users = sim(1).population.users(0, 2);
        let mut out = Vec::new();
        write_ground_truth(&mut out, &users, &[Cents(100)]).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "user_id,c,p_stay,p_pay");
        assert_eq!(lines.len(), 5);
        assert!(lines[2].starts_with("0,1.00,"));
    }
}
