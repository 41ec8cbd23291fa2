//! The assembled network: parameter layout, forward pass, and backward pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::{self, AttentionCache, AttentionGrads, AttentionParams};
use super::baseline::{sparse_acc, sparse_dot, BagFeaturizer, Features};
use super::config::{AttentionScore, IidnConfig};
use super::decoder::{self, DecoderGrads, DecoderParams, DirectDecoder, FactoredDecoder};
use super::embedding::{embed_coupon, embed_event, DwellBuckets, EmbeddingTables, RowIndex};
use super::encoder::{self, DenseLayer};
use super::features::{menu_with_null, BehaviorEvent, FeatureTuple, IntentScores, LabeledSample, MenuScore};
use super::loss::{self, LossBreakdown};
use super::lstm::{self, LstmLayer, StackCache};
use super::{IntentModel, Trainable};
use crate::error::{Error, Result};
use crate::money::Cents;
use crate::nn::{axpy, grad_check, GradCheckConfig, GradCheckReport, Grads, Matrix, ParamId, ParamStore};

#[derive(Debug, Clone)]
enum AttentionIds {
    Linear(ParamId),
    Additive { proj: ParamId, bias: ParamId, u: ParamId },
}

#[derive(Debug, Clone)]
enum DecoderIds {
    Factored {
        wx: ParamId,
        wh: ParamId,
        b: ParamId,
        stay_w: ParamId,
        stay_b: ParamId,
        pay_w: ParamId,
        pay_b: ParamId,
    },
    Direct {
        wx: ParamId,
        b: ParamId,
        pay_w: ParamId,
        pay_b: ParamId,
        stay_w: ParamId,
        stay_b: ParamId,
    },
}

#[derive(Debug, Clone)]
struct Layout {
    action: ParamId,
    dwell: ParamId,
    statics: ParamId,
    coupon: ParamId,
    lstm: Vec<(ParamId, ParamId)>,
    attention: Option<AttentionIds>,
    encoder: Vec<(ParamId, ParamId)>,
    decoder: DecoderIds,
}

fn build(cfg: &IidnConfig, seed: u64) -> Result<(ParamStore, Layout)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamStore::new();
    let rows = RowIndex::new(cfg);
    let (e, h) = (cfg.embed_dim, cfg.hidden_dim);

    let action = ps.insert_uniform("emb.action", rows.action_rows(), e, 1, &mut rng)?;
    let dwell = ps.insert_uniform("emb.dwell", cfg.dwell_bins, e, 1, &mut rng)?;
    let statics = ps.insert_uniform("emb.static", rows.static_rows(), e, 1, &mut rng)?;
    let coupon = ps.insert_uniform("emb.coupon", rows.coupon_rows(), e, 1, &mut rng)?;

    let mut lstm = Vec::new();
    for l in 0..cfg.variant.lstm_layers() {
        let input = if l == 0 { e } else { h };
        let w = ps.insert_uniform(format!("lstm{l}.w"), 4 * h, h + input, h + input, &mut rng)?;
        let b = ps.insert_uniform(format!("lstm{l}.b"), 4 * h, 1, h + input, &mut rng)?;
        lstm.push((w, b));
    }

    let attention = if cfg.variant.attention() {
        Some(match cfg.attention_score {
            AttentionScore::Linear => AttentionIds::Linear(ps.insert_uniform("att.w", 1, h, h, &mut rng)?),
            AttentionScore::Additive => AttentionIds::Additive {
                proj: ps.insert_uniform("att.proj", h, h, h, &mut rng)?,
                bias: ps.insert_uniform("att.bias", h, 1, h, &mut rng)?,
                u: ps.insert_uniform("att.u", 1, h, h, &mut rng)?,
            },
        })
    } else {
        None
    };

    let mut encoder = Vec::new();
    let mut width = h + 2 * e;
    for (k, &out) in cfg.encoder_dims.iter().enumerate() {
        let w = ps.insert_uniform(format!("enc{k}.w"), out, width, width, &mut rng)?;
        let b = ps.insert_uniform(format!("enc{k}.b"), out, 1, width, &mut rng)?;
        encoder.push((w, b));
        width = out;
    }

    let (v, d) = (cfg.encoder_output_dim(), cfg.decoder_dim);
    let bag_width = BagFeaturizer::new(cfg).width();
    let decoder = if cfg.variant.auxiliary() {
        DecoderIds::Factored {
            wx: ps.insert_uniform("dec.wx", d, v + 1, v + 1 + d, &mut rng)?,
            wh: ps.insert_uniform("dec.wh", d, d, v + 1 + d, &mut rng)?,
            b: ps.insert_uniform("dec.b", d, 1, v + 1 + d, &mut rng)?,
            stay_w: ps.insert_uniform("dec.stay_w", 1, d, d, &mut rng)?,
            stay_b: ps.insert_uniform("dec.stay_b", 1, 1, d, &mut rng)?,
            pay_w: ps.insert_uniform("dec.pay_w", 1, d, d, &mut rng)?,
            pay_b: ps.insert_uniform("dec.pay_b", 1, 1, d, &mut rng)?,
        }
    } else {
        DecoderIds::Direct {
            wx: ps.insert_uniform("dec.wx", d, v, v, &mut rng)?,
            b: ps.insert_uniform("dec.b", d, 1, v, &mut rng)?,
            pay_w: ps.insert_uniform("dec.pay_w", 1, d, d, &mut rng)?,
            pay_b: ps.insert_uniform("dec.pay_b", 1, 1, d, &mut rng)?,
            stay_w: ps.insert_uniform("stay_head.w", 1, bag_width, bag_width, &mut rng)?,
            stay_b: ps.insert_uniform("stay_head.b", 1, 1, bag_width, &mut rng)?,
        }
    };

    Ok((
        ps,
        Layout {
            action,
            dwell,
            statics,
            coupon,
            lstm,
            attention,
            encoder,
            decoder,
        },
    ))
}

/// Mutable references to several distinct gradient entries at once.
fn pick_mut<'a>(grads: &'a mut Grads, ids: &[ParamId]) -> Vec<&'a mut Matrix> {
    let mut slots: Vec<Option<&mut Matrix>> = grads.entries_mut().iter_mut().map(|(_, m)| Some(m)).collect();
    ids.iter()
        .map(|id| slots[id.0].take().expect("parameter ids are distinct"))
        .collect()
}

/// The coupon-independent part of a forward pass.
struct SequencePass {
    inputs: Vec<Vec<f64>>,
    actions: Vec<usize>,
    dwell_bins: Vec<usize>,
    lstm: StackCache,
    attention: Option<AttentionCache>,
    fused: Vec<f64>,
    static_rows: Vec<usize>,
    static_emb: Vec<f64>,
    /// Bag-of-events features for the independent staying head, if any.
    bag: Option<Features>,
}

struct HeadPass {
    coupon_rows: std::ops::Range<usize>,
    bag: Option<Features>,
    encoder: encoder::EncoderCache,
    decoder: decoder::DecoderCache,
}

#[derive(Debug, Clone)]
pub struct IidnModel {
    config: IidnConfig,
    buckets: DwellBuckets,
    params: ParamStore,
    layout: Layout,
    rows: RowIndex,
    bag: BagFeaturizer,
}

impl IidnModel {
    /// Freshly initialized network.
    pub fn new(config: IidnConfig, seed: u64) -> Result<Self> {
        let (params, layout) = build(&config, seed)?;
        Ok(IidnModel {
            rows: RowIndex::new(&config),
            bag: BagFeaturizer::new(&config),
            buckets: DwellBuckets::unfitted(config.dwell_bins),
            config,
            params,
            layout,
        })
    }

    /// Reassembles a model from persisted parts, checking every parameter
    /// against the layout `config` implies.
    pub fn from_parts(config: IidnConfig, buckets: DwellBuckets, params: ParamStore) -> Result<Self> {
        let (template, layout) = build(&config, 0)?;
        if template.len() != params.len() {
            return Err(Error::contract(format!(
                "model has {} parameters, config implies {}",
                params.len(),
                template.len()
            )));
        }
        for (t, p) in template.params().iter().zip(params.params()) {
            if t.name != p.name {
                return Err(Error::contract(format!(
                    "expected parameter `{}`, found `{}`",
                    t.name, p.name
                )));
            }
            if t.value.shape() != p.value.shape() {
                return Err(Error::Shape {
                    op: "model parameter",
                    left: t.value.shape(),
                    right: p.value.shape(),
                });
            }
        }
        if buckets.bins() != config.dwell_bins {
            return Err(Error::contract("dwell bucket count does not match config"));
        }
        Ok(IidnModel {
            rows: RowIndex::new(&config),
            bag: BagFeaturizer::new(&config),
            config,
            buckets,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &IidnConfig {
        &self.config
    }

    pub fn buckets(&self) -> &DwellBuckets {
        &self.buckets
    }

    pub fn set_buckets(&mut self, buckets: DwellBuckets) -> Result<()> {
        if buckets.bins() != self.config.dwell_bins {
            return Err(Error::contract("dwell bucket count does not match config"));
        }
        self.buckets = buckets;
        Ok(())
    }

    fn p(&self, id: ParamId) -> &Matrix {
        self.params.value(id)
    }

    fn tables(&self) -> EmbeddingTables<'_> {
        EmbeddingTables {
            action: self.p(self.layout.action),
            dwell: self.p(self.layout.dwell),
            statics: self.p(self.layout.statics),
            coupon: self.p(self.layout.coupon),
        }
    }

    fn lstm_layers(&self) -> Vec<LstmLayer<'_>> {
        self.layout
            .lstm
            .iter()
            .map(|&(w, b)| LstmLayer {
                w: self.p(w),
                b: self.p(b),
            })
            .collect()
    }

    fn attention_params(&self) -> Option<AttentionParams<'_>> {
        self.layout.attention.as_ref().map(|a| match *a {
            AttentionIds::Linear(w) => AttentionParams::Linear { w: self.p(w) },
            AttentionIds::Additive { proj, bias, u } => AttentionParams::Additive {
                proj: self.p(proj),
                bias: self.p(bias),
                u: self.p(u),
            },
        })
    }

    fn encoder_layers(&self) -> Vec<DenseLayer<'_>> {
        self.layout
            .encoder
            .iter()
            .map(|&(w, b)| DenseLayer {
                w: self.p(w),
                b: self.p(b),
            })
            .collect()
    }

    fn decoder_params(&self, stay_logit: f64) -> DecoderParams<'_> {
        match self.layout.decoder {
            DecoderIds::Factored {
                wx,
                wh,
                b,
                stay_w,
                stay_b,
                pay_w,
                pay_b,
            } => DecoderParams::Factored(FactoredDecoder {
                wx: self.p(wx),
                wh: self.p(wh),
                b: self.p(b),
                stay_w: self.p(stay_w),
                stay_b: self.p(stay_b),
                pay_w: self.p(pay_w),
                pay_b: self.p(pay_b),
            }),
            DecoderIds::Direct {
                wx, b, pay_w, pay_b, ..
            } => DecoderParams::Direct(DirectDecoder {
                wx: self.p(wx),
                b: self.p(b),
                pay_w: self.p(pay_w),
                pay_b: self.p(pay_b),
                stay_logit,
            }),
        }
    }

    /// The most recent `max_seq_len` events.
    pub fn truncate<'s>(&self, s: &'s [BehaviorEvent]) -> &'s [BehaviorEvent] {
        &s[s.len().saturating_sub(self.config.max_seq_len)..]
    }

    fn sequence_pass(&self, s: &[BehaviorEvent], h: &[u16]) -> Result<SequencePass> {
        if s.is_empty() {
            return Err(Error::contract("behavior sequence must contain at least one event"));
        }
        self.rows.check_static_len(h)?;
        let s = self.truncate(s);
        let tables = self.tables();
        let inputs: Vec<Vec<f64>> = s
            .iter()
            .map(|e| embed_event(e, tables, &self.rows, &self.buckets))
            .collect();
        let actions = s.iter().map(|e| self.rows.action(e.action)).collect();
        let dwell_bins = s.iter().map(|e| self.buckets.bucket(e.dwell)).collect();
        let layers = self.lstm_layers();
        let lstm = lstm::forward_stack(&inputs, &layers)?;
        let top = &lstm.last().expect("at least one layer");
        let (attention, fused) = match self.attention_params() {
            Some(params) => {
                let states: Vec<Vec<f64>> = top.iter().map(|st| st.q.clone()).collect();
                let cache = attention::forward(&states, params)?;
                let fused = cache.out.fused.clone();
                (Some(cache), fused)
            }
            None => (None, top.last().expect("non-empty").q.clone()),
        };
        let static_rows: Vec<usize> = h
            .iter()
            .enumerate()
            .map(|(slot, &v)| self.rows.static_value(slot, v))
            .collect();
        let mut static_emb = vec![0.0; self.config.embed_dim];
        let scale = 1.0 / h.len() as f64;
        for &r in &static_rows {
            axpy(scale, tables.statics.row(r), &mut static_emb);
        }
        let bag = match self.layout.decoder {
            DecoderIds::Direct { .. } => Some(self.bag.session(s, h, &self.buckets)?),
            DecoderIds::Factored { .. } => None,
        };
        Ok(SequencePass {
            bag,
            inputs,
            actions,
            dwell_bins,
            lstm,
            attention,
            fused,
            static_rows,
            static_emb,
        })
    }

    fn head_pass(&self, seq: &SequencePass, c: Cents) -> Result<HeadPass> {
        let coupon_rows = self.rows.coupon_span(c);
        let c_emb = embed_coupon(c, self.tables(), &self.rows);
        let input = [seq.fused.as_slice(), &seq.static_emb, &c_emb].concat();
        let encoder = encoder::forward(input, &self.encoder_layers())?;
        let (bag, stay_logit) = match (&seq.bag, &self.layout.decoder) {
            (Some(base), DecoderIds::Direct { stay_w, stay_b, .. }) => {
                let mut f = base.clone();
                f.push(self.bag.coupon(c));
                let z = sparse_dot(self.p(*stay_w).as_slice(), &f) + self.p(*stay_b).as_slice()[0];
                (Some(f), z)
            }
            _ => (None, 0.0),
        };
        let decoder = decoder::forward(encoder.output(), self.decoder_params(stay_logit))?;
        Ok(HeadPass {
            bag,
            coupon_rows,
            encoder,
            decoder,
        })
    }

    /// Attention weights over the (truncated) sequence, if the variant has attention.
    pub fn attention_weights(&self, x: &FeatureTuple) -> Result<Option<Vec<f64>>> {
        let seq = self.sequence_pass(&x.s, &x.h)?;
        Ok(seq.attention.map(|a| a.out.weights))
    }

    /// Top-layer LSTM outputs for the (truncated) sequence.
    pub fn lstm_outputs(&self, x: &FeatureTuple) -> Result<Vec<Vec<f64>>> {
        let seq = self.sequence_pass(&x.s, &x.h)?;
        Ok(seq
            .lstm
            .last()
            .expect("non-empty")
            .iter()
            .map(|s| s.q.clone())
            .collect())
    }

    /// Scores a batch; each sequence is processed independently.
    pub fn score_batch(&self, xs: &[FeatureTuple]) -> Result<Vec<IntentScores>> {
        xs.iter().map(|x| self.score(x)).collect()
    }

    /// Smallest distance of any encoder ReLU pre-activation from zero over
    /// `batch`. Finite differences are only meaningful when this exceeds the step.
    pub fn relu_margin(&self, batch: &[LabeledSample]) -> Result<f64> {
        let mut m = f64::INFINITY;
        for s in batch {
            let seq = self.sequence_pass(&s.x.s, &s.x.h)?;
            m = m.min(self.head_pass(&seq, s.x.c)?.encoder.kink_margin);
        }
        Ok(m)
    }

    /// Mean loss over `batch`.
    pub fn batch_loss(&self, batch: &[LabeledSample]) -> Result<LossBreakdown> {
        let refs: Vec<_> = batch.iter().collect();
        Ok(self.batch_gradient(&refs)?.0)
    }

    /// Central-difference check of the mean batch gradient of every parameter.
    pub fn check_gradients(&self, batch: &[LabeledSample], cfg: &GradCheckConfig) -> Result<GradCheckReport> {
        let refs: Vec<_> = batch.iter().collect();
        let (_, grads) = self.batch_gradient(&refs)?;
        let mut store = self.params.clone();
        let mut probe = self.clone();
        grad_check(
            &mut store,
            &grads,
            |p| {
                probe.params.clone_from(p);
                probe.batch_gradient(&refs).map_or(f64::NAN, |(l, _)| l.total)
            },
            cfg,
        )
    }

    fn backward(&self, seq: &SequencePass, head: &HeadPass, sample: &LabeledSample, grads: &mut Grads, weight: f64) {
        let out = loss::output_grads(&head.decoder.scores, sample.y_s, sample.y_p, weight);
        let v = head.encoder.output();

        let dv = match self.layout.decoder {
            DecoderIds::Factored {
                wx,
                wh,
                b,
                stay_w,
                stay_b,
                pay_w,
                pay_b,
            } => {
                let mut g = pick_mut(grads, &[wx, wh, b, stay_w, stay_b, pay_w, pay_b]).into_iter();
                let mut next = || g.next().expect("seven entries");
                let dg = DecoderGrads::Factored {
                    wx: next(),
                    wh: next(),
                    b: next(),
                    stay_w: next(),
                    stay_b: next(),
                    pay_w: next(),
                    pay_b: next(),
                };
                decoder::backward(&head.decoder, v, self.decoder_params(0.0), out, dg)
            }
            DecoderIds::Direct {
                wx,
                b,
                pay_w,
                pay_b,
                stay_w,
                stay_b,
            } => {
                let bag = head.bag.as_ref().expect("direct decoder keeps its bag features");
                sparse_acc(grads.get_mut(stay_w).as_mut_slice(), bag, out.d_stay_logit);
                grads.get_mut(stay_b).as_mut_slice()[0] += out.d_stay_logit;
                let mut g = pick_mut(grads, &[wx, b, pay_w, pay_b]).into_iter();
                let mut next = || g.next().expect("four entries");
                let dg = DecoderGrads::Direct {
                    wx: next(),
                    b: next(),
                    pay_w: next(),
                    pay_b: next(),
                };
                decoder::backward(&head.decoder, v, self.decoder_params(head.decoder.logits.0), out, dg)
            }
        };

        let enc_ids: Vec<ParamId> = self.layout.encoder.iter().flat_map(|&(w, b)| [w, b]).collect();
        let du = {
            let mut flat = pick_mut(grads, &enc_ids).into_iter();
            let mut pairs: Vec<(&mut Matrix, &mut Matrix)> = Vec::new();
            while let (Some(w), Some(b)) = (flat.next(), flat.next()) {
                pairs.push((w, b));
            }
            encoder::backward(&head.encoder, &self.encoder_layers(), &dv, &mut pairs)
        };

        let (hd, e) = (self.config.hidden_dim, self.config.embed_dim);
        let (df, rest) = du.split_at(hd);
        let (dh, dc) = rest.split_at(e);

        let gc = grads.get_mut(self.layout.coupon);
        for r in head.coupon_rows.clone() {
            axpy(1.0, dc, gc.row_mut(r));
        }
        let scale = 1.0 / seq.static_rows.len() as f64;
        let gs = grads.get_mut(self.layout.statics);
        for &r in &seq.static_rows {
            axpy(scale, dh, gs.row_mut(r));
        }

        let top = seq.lstm.last().expect("non-empty");
        let d_top: Vec<Vec<f64>> = match (&seq.attention, self.attention_params(), &self.layout.attention) {
            (Some(cache), Some(params), Some(ids)) => {
                let states: Vec<Vec<f64>> = top.iter().map(|s| s.q.clone()).collect();
                match *ids {
                    AttentionIds::Linear(w) => {
                        let mut g = pick_mut(grads, &[w]);
                        attention::backward(cache, &states, params, df, AttentionGrads::Linear { w: g.remove(0) })
                    }
                    AttentionIds::Additive { proj, bias, u } => {
                        let mut g = pick_mut(grads, &[proj, bias, u]).into_iter();
                        let ag = AttentionGrads::Additive {
                            proj: g.next().expect("proj"),
                            bias: g.next().expect("bias"),
                            u: g.next().expect("u"),
                        };
                        attention::backward(cache, &states, params, df, ag)
                    }
                }
            }
            _ => {
                let mut d = vec![vec![0.0; hd]; top.len()];
                d.last_mut().expect("non-empty").copy_from_slice(df);
                d
            }
        };

        let lstm_ids: Vec<ParamId> = self.layout.lstm.iter().flat_map(|&(w, b)| [w, b]).collect();
        let d_inputs = {
            let mut flat = pick_mut(grads, &lstm_ids).into_iter();
            let mut pairs: Vec<(&mut Matrix, &mut Matrix)> = Vec::new();
            while let (Some(w), Some(b)) = (flat.next(), flat.next()) {
                pairs.push((w, b));
            }
            lstm::backward_stack(&seq.lstm, &self.lstm_layers(), d_top, &mut pairs)
        };

        let mut g = pick_mut(grads, &[self.layout.action, self.layout.dwell]).into_iter();
        let (ga, gd) = (g.next().expect("action"), g.next().expect("dwell"));
        for (t, d) in d_inputs.iter().enumerate() {
            axpy(1.0, d, ga.row_mut(seq.actions[t]));
            axpy(1.0, d, gd.row_mut(seq.dwell_bins[t]));
        }
        debug_assert_eq!(d_inputs.len(), seq.inputs.len());
    }
}

impl IntentModel for IidnModel {
    fn score(&self, x: &FeatureTuple) -> Result<IntentScores> {
        let seq = self.sequence_pass(&x.s, &x.h)?;
        Ok(self.head_pass(&seq, x.c)?.decoder.scores)
    }

    fn score_menu(&self, s: &[BehaviorEvent], h: &[u16], menu: &[Cents]) -> Result<Vec<MenuScore>> {
        let seq = self.sequence_pass(s, h)?;
        menu_with_null(menu)
            .into_iter()
            .map(|amount| {
                let scores = self.head_pass(&seq, amount)?.decoder.scores;
                Ok(MenuScore {
                    amount,
                    p_stay: scores.p_stay,
                    p_pay: scores.p_pay,
                })
            })
            .collect()
    }
}

impl Trainable for IidnModel {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn prepare(&mut self, train: &[LabeledSample]) -> Result<()> {
        let dwells = train.iter().flat_map(|s| s.x.s.iter().map(|e| e.dwell));
        self.set_buckets(DwellBuckets::fit(dwells, self.config.dwell_bins))
    }

    fn accumulate(&self, sample: &LabeledSample, grads: &mut Grads, weight: f64) -> Result<LossBreakdown> {
        let seq = self.sequence_pass(&sample.x.s, &sample.x.h)?;
        let head = self.head_pass(&seq, sample.x.c)?;
        self.backward(&seq, &head, sample, grads, weight);
        Ok(loss::sample_loss(
            &head.decoder.scores,
            head.decoder.logits,
            sample.y_s,
            sample.y_p,
        ))
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::iidn::config::{AttentionScore, Variant};
    use crate::iidn::train::{train, TrainOptions};
    use crate::nn::{AdamConfig, GradCheckConfig};

    fn tiny(variant: Variant) -> IidnConfig {
        IidnConfig {
            variant,
            embed_dim: 8,
            hidden_dim: 8,
            encoder_dims: vec![8, 6],
            decoder_dim: 5,
            static_slots: 3,
            static_cardinality: 4,
            dwell_bins: 4,
            ..IidnConfig::default()
        }
    }

    fn random_sample(rng: &mut ChaCha8Rng, t: usize, slots: usize) -> LabeledSample {
        let y_s = rng.random_bool(0.6);
        LabeledSample {
            user_id: rng.random(),
            x: FeatureTuple {
                s: (0..t)
                    .map(|k| BehaviorEvent {
                        action: rng.random_range(0..16),
                        dwell: rng.random_range(0.0..10.0),
                        step: k as u32,
                    })
                    .collect(),
                h: (0..slots).map(|_| rng.random_range(0..5)).collect(),
                c: [Cents(0), Cents(100), Cents(300), Cents(250)][rng.random_range(0..4)],
            },
            y_s,
            y_p: y_s && rng.random_bool(0.5),
        }
    }

    fn check(cfg: IidnConfig, seed: u64) {
        let name = format!("{:?}/{:?}", cfg.variant, cfg.attention_score);
        // Fit the batch first: at a low-loss point the central difference's
        // rounding noise (which scales with the loss) drops well below the
        // 1e-8 denominator floor, so tiny gradient entries are still resolved.
        // Points that fail to fit, or sit near a ReLU kink, are skipped.
        for attempt in 0..16 {
            let seed = seed + 1000 * attempt;
            let mut model = IidnModel::new(cfg.clone(), seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let batch: Vec<_> = (0..4).map(|_| random_sample(&mut rng, 5, 3)).collect();
            let opts = TrainOptions {
                epochs: 800,
                batch_size: 4,
                seed,
                adam: AdamConfig {
                    learning_rate: 0.005,
                    ..AdamConfig::default()
                },
                final_lr_scale: 1.0,
            };
            train(&mut model, &batch, &opts).unwrap();
            let refs: Vec<_> = batch.iter().collect();
            let loss = model.batch_gradient(&refs).unwrap().0.total;
            if loss > 1e-2 || model.relu_margin(&batch).unwrap() < 1e-3 {
                continue;
            }
            let report = model.check_gradients(&batch, &GradCheckConfig::default()).unwrap();
            assert!(
                report.passed(),
                "{name}: loss {loss:.2e}, worst {:?} (max rel error {:.3e})",
                report.worst(),
                report.max_rel_error()
            );
            return;
        }
        panic!("{name}: no kink-free check point found");
    }

    #[test]
    fn gradients_match_finite_differences_for_every_variant() {
        for (k, v) in Variant::ALL.into_iter().enumerate() {
            check(tiny(v), 11 + k as u64);
        }
    }

    #[test]
    fn gradients_match_with_additive_attention() {
        check(
            IidnConfig {
                attention_score: AttentionScore::Additive,
                ..tiny(Variant::Iidn)
            },
            5,
        );
    }

    #[test]
    fn purchase_factorizes_through_staying() {
        let model = IidnModel::new(tiny(Variant::Iidn), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let t = rng.random_range(1..8);
            let x = random_sample(&mut rng, t, 3).x;
            let s = model.score(&x).unwrap();
            let cond = s.p_pay_given_stay.unwrap();
            assert!((s.p_pay - s.p_stay * cond).abs() < 1e-12);
            assert!(s.p_pay <= s.p_stay + 1e-12);
            assert!((0.0..=1.0).contains(&s.p_stay) && (0.0..=1.0).contains(&cond));
        }
    }

    #[test]
    fn long_sequences_score_like_their_recent_tail() {
        let cfg = IidnConfig {
            max_seq_len: 6,
            ..tiny(Variant::Iidn)
        };
        let model = IidnModel::new(cfg, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_sample(&mut rng, 20, 3).x;
        let tail = FeatureTuple {
            s: x.s[14..].to_vec(),
            ..x.clone()
        };
        assert_eq!(model.score(&x).unwrap(), model.score(&tail).unwrap());
        assert_eq!(model.attention_weights(&x).unwrap().unwrap().len(), 6);
    }

    #[test]
    fn menu_scores_match_pointwise_scores() {
        let model = IidnModel::new(tiny(Variant::SingleLstm), 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_sample(&mut rng, 7, 3).x;
        let menu = model.score_menu(&x.s, &x.h, &[Cents(300), Cents(100)]).unwrap();
        let amounts: Vec<_> = menu.iter().map(|m| m.amount).collect();
        assert_eq!(amounts, vec![Cents(0), Cents(100), Cents(300)]);
        for m in menu {
            let s = model
                .score(&FeatureTuple {
                    c: m.amount,
                    ..x.clone()
                })
                .unwrap();
            assert!((s.p_pay - m.p_pay).abs() < 1e-14 && (s.p_stay - m.p_stay).abs() < 1e-14);
        }
    }

    #[test]
    fn attention_weights_are_a_distribution() {
        let model = IidnModel::new(tiny(Variant::Iidn), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_sample(&mut rng, 9, 3).x;
        let w = model.attention_weights(&x).unwrap().unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let flat = IidnModel::new(tiny(Variant::NonAttention), 3).unwrap();
        assert!(flat.attention_weights(&x).unwrap().is_none());
    }

    #[test]
    fn from_parts_rejects_foreign_layouts() {
        let a = IidnModel::new(tiny(Variant::Iidn), 1).unwrap();
        let err = IidnModel::from_parts(tiny(Variant::SingleLstm), a.buckets.clone(), a.params.clone());
        assert!(err.is_err());
        IidnModel::from_parts(tiny(Variant::Iidn), a.buckets.clone(), a.params.clone()).unwrap();
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let model = IidnModel::new(tiny(Variant::Iidn), 1).unwrap();
        let x = FeatureTuple {
            s: vec![],
            h: vec![0; 3],
            c: Cents(0),
        };
        assert!(matches!(model.score(&x), Err(Error::Contract(_))));
    }
}
