//! Two-step recurrent decoder emitting the staying intent, then the
//! purchasing intent conditioned on staying.
//!
//! Step 1 reads `[v, 0]` and emits `pS`. Step 2 reads `[v, pS]` together with
//! the step-1 hidden state and emits `pPS`; `pP = pS · pPS`. The ablation
//! without the auxiliary task runs a single step that emits `pP`; its `pS`
//! comes from an independent head outside the decoder.

use super::features::IntentScores;
use crate::error::{Error, Result};
use crate::nn::{dot, sigmoid, Matrix};

#[derive(Clone, Copy)]
pub struct FactoredDecoder<'a> {
    /// `D × (V + 1)`
    pub wx: &'a Matrix,
    /// `D × D`
    pub wh: &'a Matrix,
    pub b: &'a Matrix,
    pub stay_w: &'a Matrix,
    pub stay_b: &'a Matrix,
    pub pay_w: &'a Matrix,
    pub pay_b: &'a Matrix,
}

#[derive(Clone, Copy)]
pub struct DirectDecoder<'a> {
    /// `D × V`
    pub wx: &'a Matrix,
    pub b: &'a Matrix,
    pub pay_w: &'a Matrix,
    pub pay_b: &'a Matrix,
    /// Logit of the independent staying head, passed through to the scores.
    pub stay_logit: f64,
}

#[derive(Clone, Copy)]
pub enum DecoderParams<'a> {
    Factored(FactoredDecoder<'a>),
    Direct(DirectDecoder<'a>),
}

pub(crate) struct DecoderCache {
    pub(crate) scores: IntentScores,
    /// Pre-sigmoid `(stay, pay)` logits, for a well-conditioned loss.
    pub(crate) logits: (f64, f64),
    d1: Vec<f64>,
    d2: Vec<f64>,
}

fn rnn_step(wx: &Matrix, b: &Matrix, input: &[f64], wh: Option<(&Matrix, &[f64])>) -> Vec<f64> {
    let mut d = vec![0.0; wx.rows()];
    wx.matvec_into(input, &mut d);
    if let Some((wh, prev)) = wh {
        for (r, v) in d.iter_mut().enumerate() {
            *v += dot(wh.row(r), prev);
        }
    }
    for (v, bb) in d.iter_mut().zip(b.as_slice()) {
        *v = (*v + bb).tanh();
    }
    d
}

fn head(w: &Matrix, b: &Matrix, x: &[f64]) -> f64 {
    dot(w.as_slice(), x) + b.as_slice()[0]
}

pub(crate) fn forward(v: &[f64], params: DecoderParams<'_>) -> Result<DecoderCache> {
    match params {
        DecoderParams::Factored(p) => {
            if p.wx.cols() != v.len() + 1 {
                return Err(Error::Shape {
                    op: "decoder input",
                    left: p.wx.shape(),
                    right: (v.len(), 1),
                });
            }
            let mut input = Vec::with_capacity(v.len() + 1);
            input.extend_from_slice(v);
            input.push(0.0);
            let d1 = rnn_step(p.wx, p.b, &input, None);
            let z_stay = head(p.stay_w, p.stay_b, &d1);
            let p_stay = sigmoid(z_stay);
            *input.last_mut().expect("non-empty") = p_stay;
            let d2 = rnn_step(p.wx, p.b, &input, Some((p.wh, &d1)));
            let z_pay = head(p.pay_w, p.pay_b, &d2);
            Ok(DecoderCache {
                scores: IntentScores::factored(p_stay, sigmoid(z_pay)),
                logits: (z_stay, z_pay),
                d1,
                d2,
            })
        }
        DecoderParams::Direct(p) => {
            if p.wx.cols() != v.len() {
                return Err(Error::Shape {
                    op: "decoder input",
                    left: p.wx.shape(),
                    right: (v.len(), 1),
                });
            }
            let d1 = rnn_step(p.wx, p.b, v, None);
            let z_pay = head(p.pay_w, p.pay_b, &d1);
            let z_stay = p.stay_logit;
            Ok(DecoderCache {
                scores: IntentScores::direct(sigmoid(z_stay), sigmoid(z_pay)),
                logits: (z_stay, z_pay),
                d1,
                d2: Vec::new(),
            })
        }
    }
}

pub fn decode(v: &[f64], params: DecoderParams<'_>) -> Result<IntentScores> {
    forward(v, params).map(|c| c.scores)
}

/// Loss gradients at the decoder outputs.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct OutputGrads {
    /// `dL/dlogit` of the staying head from the loss terms. The factored
    /// decoder adds the path through the step-2 input itself.
    pub d_stay_logit: f64,
    /// `dL/dlogit` of the final purchase head (`pPS` or direct `pP`).
    pub d_pay_logit: f64,
}

pub(crate) enum DecoderGrads<'g> {
    Factored {
        wx: &'g mut Matrix,
        wh: &'g mut Matrix,
        b: &'g mut Matrix,
        stay_w: &'g mut Matrix,
        stay_b: &'g mut Matrix,
        pay_w: &'g mut Matrix,
        pay_b: &'g mut Matrix,
    },
    Direct {
        wx: &'g mut Matrix,
        b: &'g mut Matrix,
        pay_w: &'g mut Matrix,
        pay_b: &'g mut Matrix,
    },
}

fn add(m: &mut Matrix, d: &[f64]) {
    for (g, v) in m.as_mut_slice().iter_mut().zip(d) {
        *g += v;
    }
}

/// Returns `dL/dv`.
pub(crate) fn backward(
    cache: &DecoderCache,
    v: &[f64],
    params: DecoderParams<'_>,
    out: OutputGrads,
    grads: DecoderGrads<'_>,
) -> Vec<f64> {
    match (params, grads) {
        (
            DecoderParams::Factored(p),
            DecoderGrads::Factored {
                wx,
                wh,
                b,
                stay_w,
                stay_b,
                pay_w,
                pay_b,
            },
        ) => {
            let n = v.len();
            let p_stay = cache.scores.p_stay;
            let (d1, d2) = (&cache.d1, &cache.d2);

            // step 2
            add(pay_w, &d2.iter().map(|x| out.d_pay_logit * x).collect::<Vec<_>>());
            pay_b.as_mut_slice()[0] += out.d_pay_logit;
            let dpre2: Vec<f64> = d2
                .iter()
                .zip(p.pay_w.as_slice())
                .map(|(h, w)| out.d_pay_logit * w * (1.0 - h * h))
                .collect();
            let mut input2 = v.to_vec();
            input2.push(p_stay);
            wx.outer_acc(&dpre2, &input2);
            wh.outer_acc(&dpre2, d1);
            add(b, &dpre2);
            let mut d_in2 = vec![0.0; n + 1];
            p.wx.matvec_t_acc(&dpre2, &mut d_in2);
            let mut dd1 = vec![0.0; d1.len()];
            p.wh.matvec_t_acc(&dpre2, &mut dd1);

            // step 1, through pS (both the loss paths and the step-2 input)
            let d_stay_logit = out.d_stay_logit + d_in2[n] * p_stay * (1.0 - p_stay);
            add(stay_w, &d1.iter().map(|x| d_stay_logit * x).collect::<Vec<_>>());
            stay_b.as_mut_slice()[0] += d_stay_logit;
            for (d, w) in dd1.iter_mut().zip(p.stay_w.as_slice()) {
                *d += d_stay_logit * w;
            }
            let dpre1: Vec<f64> = dd1.iter().zip(d1).map(|(d, h)| d * (1.0 - h * h)).collect();
            let mut input1 = v.to_vec();
            input1.push(0.0);
            wx.outer_acc(&dpre1, &input1);
            add(b, &dpre1);
            let mut d_in1 = vec![0.0; n + 1];
            p.wx.matvec_t_acc(&dpre1, &mut d_in1);

            d_in1.truncate(n);
            for (a, bb) in d_in1.iter_mut().zip(&d_in2) {
                *a += bb;
            }
            d_in1
        }
        (DecoderParams::Direct(p), DecoderGrads::Direct { wx, b, pay_w, pay_b }) => {
            let d1 = &cache.d1;
            add(pay_w, &d1.iter().map(|x| out.d_pay_logit * x).collect::<Vec<_>>());
            pay_b.as_mut_slice()[0] += out.d_pay_logit;
            let dpre: Vec<f64> = d1
                .iter()
                .zip(p.pay_w.as_slice())
                .map(|(h, w)| out.d_pay_logit * w * (1.0 - h * h))
                .collect();
            wx.outer_acc(&dpre, v);
            add(b, &dpre);
            let mut dv = vec![0.0; v.len()];
            p.wx.matvec_t_acc(&dpre, &mut dv);
            dv
        }
        _ => unreachable!("decoder params and grads always built from the same config"),
    }
}
