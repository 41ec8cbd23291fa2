//! Mini-batch Adam training shared by every model in this crate.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::LabeledSample;
use super::loss::LossBreakdown;
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamConfig, Grads, ParamStore};

/// A model that can report per-sample losses and accumulate their gradients.
pub trait Trainable {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;

    /// Fits data-dependent preprocessing (e.g. bucket edges) before the first epoch.
    fn prepare(&mut self, _train: &[LabeledSample]) -> Result<()> {
        Ok(())
    }

    /// Adds `weight · ∇(L_s + L_p)` for one sample into `grads`.
    fn accumulate(&self, sample: &LabeledSample, grads: &mut Grads, weight: f64) -> Result<LossBreakdown>;

    /// Mean loss and gradient over `batch`.
    fn batch_gradient(&self, batch: &[&LabeledSample]) -> Result<(LossBreakdown, Grads)> {
        if batch.is_empty() {
            return Err(Error::contract("gradient of an empty batch"));
        }
        let mut grads = self.params().zero_grads();
        let w = 1.0 / batch.len() as f64;
        let (mut s, mut p) = (0.0, 0.0);
        for sample in batch {
            let l = self.accumulate(sample, &mut grads, w)?;
            s += l.stay * w;
            p += l.pay * w;
        }
        Ok((LossBreakdown::new(s, p), grads))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Learning rate on the last step as a fraction of `adam.learning_rate`,
    /// reached by linear decay over all steps; 1 keeps it constant.
    pub final_lr_scale: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 8,
            batch_size: 64,
            seed: 17,
            adam: AdamConfig::default(),
            final_lr_scale: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub stay: f64,
    pub pay: f64,
    pub total: f64,
}

/// Trains in place and returns the per-epoch mean training losses.
pub fn train<M: Trainable>(model: &mut M, data: &[LabeledSample], opts: &TrainOptions) -> Result<Vec<EpochLoss>> {
    opts.adam.validate()?;
    if opts.batch_size == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    if !(opts.final_lr_scale > 0.0 && opts.final_lr_scale <= 1.0) {
        return Err(Error::config("final_lr_scale must lie in (0, 1]"));
    }
    if opts.epochs == 0 {
        return Ok(Vec::new());
    }
    if data.is_empty() {
        return Err(Error::contract("training set is empty"));
    }
    for s in data {
        s.validate()?;
    }
    model.prepare(data)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grads = model.params().zero_grads();
    let mut curve = Vec::with_capacity(opts.epochs);
    let total_steps = opts.epochs * data.len().div_ceil(opts.batch_size);
    let mut adam = opts.adam;
    let mut step = 0usize;
    for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        let (mut sum_s, mut sum_p) = (0.0, 0.0);
        for (b, batch) in order.chunks(opts.batch_size).enumerate() {
            grads.zero();
            let w = 1.0 / batch.len() as f64;
            let (mut bs, mut bp) = (0.0, 0.0);
            for &i in batch {
                let l = model.accumulate(&data[i], &mut grads, w)?;
                bs += l.stay;
                bp += l.pay;
            }
            if !(bs.is_finite() && bp.is_finite()) || !grads.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss diverged at epoch {epoch}, batch {b} (L_s sum {bs}, L_p sum {bp})"
                )));
            }
            sum_s += bs;
            sum_p += bp;
            let progress = step as f64 / (total_steps - 1).max(1) as f64;
            adam.learning_rate = opts.adam.learning_rate * (1.0 - (1.0 - opts.final_lr_scale) * progress);
            adam_step(model.params_mut(), &grads, &adam)?;
            step += 1;
        }
        let n = data.len() as f64;
        curve.push(EpochLoss {
            epoch,
            stay: sum_s / n,
            pay: sum_p / n,
            total: (sum_s + sum_p) / n,
        });
    }
    Ok(curve)
}

/// Seeded 80/20-style split by user id; every sample of a user lands on the same side.
pub fn split_by_user(
    samples: &[LabeledSample],
    valid_fraction: f64,
    seed: u64,
) -> (Vec<LabeledSample>, Vec<LabeledSample>) {
    let mut users: Vec<u64> = samples.iter().map(|s| s.user_id).collect();
    users.sort_unstable();
    users.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    users.shuffle(&mut rng);
    let n_valid = (users.len() as f64 * valid_fraction).round() as usize;
    let valid: std::collections::HashSet<u64> = users[..n_valid].iter().copied().collect();
    samples.iter().cloned().partition(|s| !valid.contains(&s.user_id))
}

/// `epoch,L_s,L_p,L` CSV.
pub fn write_loss_curve<W: Write>(mut w: W, curve: &[EpochLoss]) -> std::io::Result<()> {
    writeln!(w, "epoch,L_s,L_p,L")?;
    for e in curve {
        writeln!(w, "{},{},{},{}", e.epoch, e.stay, e.pay, e.total)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iidn::features::{BehaviorEvent, FeatureTuple};
    use crate::money::Cents;

    fn sample(user: u64) -> LabeledSample {
        LabeledSample {
            user_id: user,
            x: FeatureTuple {
                s: vec![BehaviorEvent {
                    action: 0,
                    dwell: 1.0,
                    step: 0,
                }],
                h: vec![],
                c: Cents(0),
            },
            y_s: true,
            y_p: false,
        }
    }

    #[test]
    fn split_keeps_users_whole() {
        let data: Vec<_> = (0..100).flat_map(|u| [sample(u), sample(u)]).collect();
        let (tr, va) = split_by_user(&data, 0.2, 3);
        assert_eq!(tr.len() + va.len(), 200);
        assert_eq!(va.len(), 40);
        let tr_users: std::collections::HashSet<_> = tr.iter().map(|s| s.user_id).collect();
        assert!(va.iter().all(|s| !tr_users.contains(&s.user_id)));
        assert_eq!(split_by_user(&data, 0.2, 3).1, va);
    }

    /// One scalar whose gradient is always 1, so each Adam step moves by about the step's learning rate.
    struct Drift(ParamStore);

    impl Trainable for Drift {
        fn params(&self) -> &ParamStore {
            &self.0
        }
        fn params_mut(&mut self) -> &mut ParamStore {
            &mut self.0
        }
        fn accumulate(&self, _: &LabeledSample, grads: &mut Grads, weight: f64) -> Result<LossBreakdown> {
            grads.entries_mut()[0].1.as_mut_slice()[0] += weight;
            Ok(LossBreakdown::new(0.0, 0.0))
        }
    }

    fn drift() -> Drift {
        let mut ps = ParamStore::new();
        ps.insert("x", crate::nn::Matrix::zeros(1, 1)).unwrap();
        Drift(ps)
    }

    #[test]
    fn learning_rate_decays_linearly_to_the_final_scale() {
        let data = [sample(1)];
        let opts = TrainOptions {
            epochs: 5,
            batch_size: 1,
            final_lr_scale: 0.2,
            ..TrainOptions::default()
        };
        let mut m = drift();
        train(&mut m, &data, &opts).unwrap();
        // Step scales 1, 0.8, 0.6, 0.4, 0.2.
        let want = -3.0 * opts.adam.learning_rate / (1.0 + opts.adam.epsilon);
        assert!((m.0.get("x").unwrap().get(0, 0) - want).abs() < 1e-15);

        let constant = TrainOptions {
            final_lr_scale: 1.0,
            ..opts
        };
        let mut m = drift();
        train(&mut m, &data, &constant).unwrap();
        let want = -5.0 * opts.adam.learning_rate / (1.0 + opts.adam.epsilon);
        assert!((m.0.get("x").unwrap().get(0, 0) - want).abs() < 1e-15);
    }

    #[test]
    fn final_scale_outside_unit_interval_is_rejected() {
        for bad in [0.0, -0.5, 1.5, f64::NAN] {
            let opts = TrainOptions {
                final_lr_scale: bad,
                ..TrainOptions::default()
            };
            assert!(matches!(
                train(&mut drift(), &[sample(1)], &opts),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn curve_csv_layout() {
        let mut out = Vec::new();
        write_loss_curve(
            &mut out,
            &[EpochLoss {
                epoch: 1,
                stay: 0.5,
                pay: 0.25,
                total: 0.75,
            }],
        )
        .unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "epoch,L_s,L_p,L\n1,0.5,0.25,0.75\n");
    }
}
