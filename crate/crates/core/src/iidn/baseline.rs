//! Logistic-regression baseline on hand-built session aggregates.
//!
//! Features: action frequencies, dwell-bucket frequencies, log session
//! length, one-hot static slots and a one-hot coupon amount. Two independent
//! heads score staying and purchasing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::IidnConfig;
use super::embedding::{DwellBuckets, RowIndex};
use super::features::{menu_with_null, BehaviorEvent, FeatureTuple, IntentScores, LabeledSample, MenuScore};
use super::loss::{self, LossBreakdown};
use super::{IntentModel, Trainable};
use crate::error::{Error, Result};
use crate::money::Cents;
use crate::nn::{dot, sigmoid, Grads, ParamId, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrConfig {
    pub action_vocab: usize,
    pub dwell_bins: usize,
    pub static_slots: usize,
    pub static_cardinality: usize,
    pub coupon_amounts: Vec<Cents>,
    pub max_seq_len: usize,
}

impl Default for LrConfig {
    fn default() -> Self {
        LrConfig::from(&IidnConfig::default())
    }
}

impl From<&IidnConfig> for LrConfig {
    fn from(c: &IidnConfig) -> Self {
        LrConfig {
            action_vocab: c.action_vocab,
            dwell_bins: c.dwell_bins,
            static_slots: c.static_slots,
            static_cardinality: c.static_cardinality,
            coupon_amounts: c.coupon_amounts.clone(),
            max_seq_len: c.max_seq_len,
        }
    }
}

impl LrConfig {
    fn as_iidn(&self) -> IidnConfig {
        IidnConfig {
            action_vocab: self.action_vocab,
            dwell_bins: self.dwell_bins,
            static_slots: self.static_slots,
            static_cardinality: self.static_cardinality,
            coupon_amounts: self.coupon_amounts.clone(),
            max_seq_len: self.max_seq_len,
            ..Default::default()
        }
    }
}

/// Sparse feature vector: `(index, value)` pairs.
pub(crate) type Features = Vec<(usize, f64)>;

/// Bag-of-events session features shared by the baseline and the
/// independent staying head of the non-auxiliary ablation.
#[derive(Debug, Clone)]
pub(crate) struct BagFeaturizer {
    rows: RowIndex,
    dwell_bins: usize,
    max_seq_len: usize,
}

impl BagFeaturizer {
    pub(crate) fn new(cfg: &IidnConfig) -> Self {
        BagFeaturizer {
            rows: RowIndex::new(cfg),
            dwell_bins: cfg.dwell_bins,
            max_seq_len: cfg.max_seq_len,
        }
    }

    pub(crate) fn width(&self) -> usize {
        self.rows.action_rows() + self.dwell_bins + 1 + self.rows.static_rows() + self.rows.coupon_rows()
    }

    /// Everything except the coupon column.
    pub(crate) fn session(&self, s: &[BehaviorEvent], h: &[u16], buckets: &DwellBuckets) -> Result<Features> {
        if s.is_empty() {
            return Err(Error::contract("behavior sequence must contain at least one event"));
        }
        self.rows.check_static_len(h)?;
        let s = &s[s.len().saturating_sub(self.max_seq_len)..];
        let mut dense = vec![0.0; self.rows.action_rows() + self.dwell_bins];
        let w = 1.0 / s.len() as f64;
        for e in s {
            dense[self.rows.action(e.action)] += w;
            let b = buckets.bucket(e.dwell).min(self.dwell_bins - 1);
            dense[self.rows.action_rows() + b] += w;
        }
        let mut f: Features = dense.into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect();
        let mut offset = self.rows.action_rows() + self.dwell_bins;
        f.push((offset, (s.len() as f64).ln_1p() / (self.max_seq_len as f64).ln_1p()));
        offset += 1;
        for (slot, &v) in h.iter().enumerate() {
            f.push((offset + self.rows.static_value(slot, v), 1.0));
        }
        Ok(f)
    }

    pub(crate) fn coupon(&self, c: Cents) -> (usize, f64) {
        (self.width() - self.rows.coupon_rows() + self.rows.coupon(c), 1.0)
    }

    pub(crate) fn full(&self, x: &FeatureTuple, buckets: &DwellBuckets) -> Result<Features> {
        let mut f = self.session(&x.s, &x.h, buckets)?;
        f.push(self.coupon(x.c));
        Ok(f)
    }
}

pub(crate) fn sparse_dot(w: &[f64], f: &Features) -> f64 {
    f.iter().map(|&(i, v)| w[i] * v).sum()
}

pub(crate) fn sparse_acc(g: &mut [f64], f: &Features, scale: f64) {
    for &(i, v) in f {
        g[i] += scale * v;
    }
}

#[derive(Debug, Clone)]
pub struct LrModel {
    config: LrConfig,
    buckets: DwellBuckets,
    params: ParamStore,
    feat: BagFeaturizer,
    ids: [ParamId; 4],
}

const NAMES: [&str; 4] = ["lr.stay_w", "lr.stay_b", "lr.pay_w", "lr.pay_b"];

impl LrModel {
    pub fn new(config: LrConfig, seed: u64) -> Result<Self> {
        let feat = BagFeaturizer::new(&config.as_iidn());
        let width = feat.width();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let shapes = [(1, width), (1, 1), (1, width), (1, 1)];
        let mut ids = [ParamId(0); 4];
        for (k, (name, (r, c))) in NAMES.iter().zip(shapes).enumerate() {
            ids[k] = params.insert_uniform(*name, r, c, width, &mut rng)?;
        }
        Ok(LrModel {
            buckets: DwellBuckets::unfitted(config.dwell_bins),
            config,
            params,
            feat,
            ids,
        })
    }

    pub fn from_parts(config: LrConfig, buckets: DwellBuckets, params: ParamStore) -> Result<Self> {
        let template = LrModel::new(config, 0)?;
        if params.len() != 4 {
            return Err(Error::contract("LR model must have exactly four parameters"));
        }
        for (t, p) in template.params.params().iter().zip(params.params()) {
            if t.name != p.name || t.value.shape() != p.value.shape() {
                return Err(Error::contract(format!("unexpected LR parameter `{}`", p.name)));
            }
        }
        if buckets.bins() != template.config.dwell_bins {
            return Err(Error::contract("dwell bucket count does not match config"));
        }
        Ok(LrModel {
            buckets,
            params,
            ..template
        })
    }

    pub fn config(&self) -> &LrConfig {
        &self.config
    }

    pub fn buckets(&self) -> &DwellBuckets {
        &self.buckets
    }

    fn logits(&self, f: &Features) -> (f64, f64) {
        let [sw, sb, pw, pb] = self.ids;
        let p = |id| self.params.value(id).as_slice();
        (sparse_dot(p(sw), f) + p(sb)[0], sparse_dot(p(pw), f) + p(pb)[0])
    }

    fn scores(&self, f: &Features) -> IntentScores {
        let (zs, zp) = self.logits(f);
        IntentScores::direct(sigmoid(zs), sigmoid(zp))
    }

    /// Dense feature vector, for inspection and tests.
    pub fn features(&self, x: &FeatureTuple) -> Result<Vec<f64>> {
        let mut dense = vec![0.0; self.feat.width()];
        for (i, v) in self.feat.full(x, &self.buckets)? {
            dense[i] += v;
        }
        Ok(dense)
    }

    pub fn pay_logit_dense(&self, dense: &[f64]) -> f64 {
        dot(self.params.value(self.ids[2]).as_slice(), dense) + self.params.value(self.ids[3]).as_slice()[0]
    }
}

impl IntentModel for LrModel {
    fn score(&self, x: &FeatureTuple) -> Result<IntentScores> {
        Ok(self.scores(&self.feat.full(x, &self.buckets)?))
    }

    fn score_menu(&self, s: &[BehaviorEvent], h: &[u16], menu: &[Cents]) -> Result<Vec<MenuScore>> {
        let base = self.feat.session(s, h, &self.buckets)?;
        Ok(menu_with_null(menu)
            .into_iter()
            .map(|amount| {
                let mut f = base.clone();
                f.push(self.feat.coupon(amount));
                let sc = self.scores(&f);
                MenuScore {
                    amount,
                    p_stay: sc.p_stay,
                    p_pay: sc.p_pay,
                }
            })
            .collect())
    }
}

impl Trainable for LrModel {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn prepare(&mut self, train: &[LabeledSample]) -> Result<()> {
        let dwells = train.iter().flat_map(|s| s.x.s.iter().map(|e| e.dwell));
        self.buckets = DwellBuckets::fit(dwells, self.config.dwell_bins);
        Ok(())
    }

    fn accumulate(&self, sample: &LabeledSample, grads: &mut Grads, weight: f64) -> Result<LossBreakdown> {
        let f = self.feat.full(&sample.x, &self.buckets)?;
        let z = self.logits(&f);
        let sc = IntentScores::direct(sigmoid(z.0), sigmoid(z.1));
        let out = loss::output_grads(&sc, sample.y_s, sample.y_p, weight);
        let [sw, sb, pw, pb] = self.ids;
        for (wid, bid, d) in [(sw, sb, out.d_stay_logit), (pw, pb, out.d_pay_logit)] {
            sparse_acc(grads.get_mut(wid).as_mut_slice(), &f, d);
            grads.get_mut(bid).as_mut_slice()[0] += d;
        }
        Ok(loss::sample_loss(&sc, z, sample.y_s, sample.y_p))
    }
}
