//! Attention pooling over every LSTM output state.

use crate::error::{Error, Result};
use crate::nn::{dot, softmax_in_place, Matrix};

#[derive(Clone, Copy)]
pub enum AttentionParams<'a> {
    /// `w` is `1 × H`.
    Linear { w: &'a Matrix },
    /// `proj` is `A × H`, `bias` is `A × 1`, `u` is `1 × A`.
    Additive {
        proj: &'a Matrix,
        bias: &'a Matrix,
        u: &'a Matrix,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// Softmax weights `a_t`, one per state.
    pub weights: Vec<f64>,
    /// `f = Σ a_t q_t`
    pub fused: Vec<f64>,
}

/// Hidden activations of the additive scorer, kept for backward.
pub(crate) struct AttentionCache {
    pub(crate) out: AttentionOutput,
    hidden: Vec<Vec<f64>>,
}

fn logits(states: &[Vec<f64>], params: AttentionParams<'_>) -> (Vec<f64>, Vec<Vec<f64>>) {
    match params {
        AttentionParams::Linear { w } => (states.iter().map(|q| dot(w.as_slice(), q)).collect(), Vec::new()),
        AttentionParams::Additive { proj, bias, u } => {
            let mut hidden = Vec::with_capacity(states.len());
            let mut e = Vec::with_capacity(states.len());
            for q in states {
                let mut a = vec![0.0; proj.rows()];
                proj.matvec_into(q, &mut a);
                for (v, b) in a.iter_mut().zip(bias.as_slice()) {
                    *v = (*v + b).tanh();
                }
                e.push(dot(u.as_slice(), &a));
                hidden.push(a);
            }
            (e, hidden)
        }
    }
}

fn check(states: &[Vec<f64>], params: AttentionParams<'_>) -> Result<()> {
    let Some(first) = states.first() else {
        return Err(Error::contract("attention needs at least one state"));
    };
    let h = first.len();
    let ok = match params {
        AttentionParams::Linear { w } => w.shape() == (1, h),
        AttentionParams::Additive { proj, bias, u } => {
            proj.cols() == h && bias.shape() == (proj.rows(), 1) && u.shape() == (1, proj.rows())
        }
    };
    if !ok || states.iter().any(|q| q.len() != h) {
        return Err(Error::Shape {
            op: "attention",
            left: (states.len(), h),
            right: match params {
                AttentionParams::Linear { w } => w.shape(),
                AttentionParams::Additive { proj, .. } => proj.shape(),
            },
        });
    }
    Ok(())
}

pub(crate) fn forward(states: &[Vec<f64>], params: AttentionParams<'_>) -> Result<AttentionCache> {
    check(states, params)?;
    let (mut weights, hidden) = logits(states, params);
    softmax_in_place(&mut weights);
    let mut fused = vec![0.0; states[0].len()];
    for (a, q) in weights.iter().zip(states) {
        for (f, v) in fused.iter_mut().zip(q) {
            *f += a * v;
        }
    }
    Ok(AttentionCache {
        out: AttentionOutput { weights, fused },
        hidden,
    })
}

/// Fuses `q_1..q_T` into one feature map.
pub fn attention_fuse(states: &[Vec<f64>], params: AttentionParams<'_>) -> Result<AttentionOutput> {
    forward(states, params).map(|c| c.out)
}

/// Gradient buffers matching [`AttentionParams`].
pub(crate) enum AttentionGrads<'g> {
    Linear {
        w: &'g mut Matrix,
    },
    Additive {
        proj: &'g mut Matrix,
        bias: &'g mut Matrix,
        u: &'g mut Matrix,
    },
}

/// Returns `dL/dq_t` for each state and accumulates parameter gradients.
pub(crate) fn backward(
    cache: &AttentionCache,
    states: &[Vec<f64>],
    params: AttentionParams<'_>,
    d_fused: &[f64],
    grads: AttentionGrads<'_>,
) -> Vec<Vec<f64>> {
    let a = &cache.out.weights;
    let mut dq: Vec<Vec<f64>> = a.iter().map(|&w| d_fused.iter().map(|d| w * d).collect()).collect();
    let da: Vec<f64> = states.iter().map(|q| dot(d_fused, q)).collect();
    let mean: f64 = a.iter().zip(&da).map(|(w, d)| w * d).sum();
    let de: Vec<f64> = a.iter().zip(&da).map(|(w, d)| w * (d - mean)).collect();
    match (params, grads) {
        (AttentionParams::Linear { w }, AttentionGrads::Linear { w: gw }) => {
            for (t, q) in states.iter().enumerate() {
                for (g, v) in gw.as_mut_slice().iter_mut().zip(q) {
                    *g += de[t] * v;
                }
                for (d, wv) in dq[t].iter_mut().zip(w.as_slice()) {
                    *d += de[t] * wv;
                }
            }
        }
        (
            AttentionParams::Additive { proj, u, .. },
            AttentionGrads::Additive {
                proj: gproj,
                bias: gbias,
                u: gu,
            },
        ) => {
            for (t, q) in states.iter().enumerate() {
                let hid = &cache.hidden[t];
                for (g, v) in gu.as_mut_slice().iter_mut().zip(hid) {
                    *g += de[t] * v;
                }
                let dpre: Vec<f64> = hid
                    .iter()
                    .zip(u.as_slice())
                    .map(|(hv, uv)| de[t] * uv * (1.0 - hv * hv))
                    .collect();
                gproj.outer_acc(&dpre, q);
                for (g, d) in gbias.as_mut_slice().iter_mut().zip(&dpre) {
                    *g += d;
                }
                proj.matvec_t_acc(&dpre, &mut dq[t]);
            }
        }
        _ => unreachable!("attention params and grads always built from the same config"),
    }
    dq
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_state_passes_through() {
        let w = Matrix::from_vec(1, 3, vec![0.3, -2.0, 1.0]).unwrap();
        let q = vec![vec![0.1, 0.2, -0.3]];
        let out = attention_fuse(&q, AttentionParams::Linear { w: &w }).unwrap();
        assert_eq!(out.weights, vec![1.0]);
        assert_eq!(out.fused, q[0]);
    }

    #[test]
    fn identical_states_fuse_to_themselves() {
        let w = Matrix::from_vec(1, 2, vec![5.0, -7.0]).unwrap();
        let q = vec![vec![0.25, -0.5]; 6];
        let out = attention_fuse(&q, AttentionParams::Linear { w: &w }).unwrap();
        for (f, v) in out.fused.iter().zip(&q[0]) {
            assert!((f - v).abs() < 1e-15);
        }
    }

    #[test]
    fn seeded_four_states_match_hand_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = 3;
        let w = Matrix::from_fn(1, h, |_, _| rng.random_range(-1.0..1.0));
        let q: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..h).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let out = attention_fuse(&q, AttentionParams::Linear { w: &w }).unwrap();

        let e: Vec<f64> = q
            .iter()
            .map(|qt| (0..h).map(|k| w.get(0, k) * qt[k]).sum::<f64>().exp())
            .collect();
        let z: f64 = e.iter().sum();
        for t in 0..4 {
            assert!((out.weights[t] - e[t] / z).abs() < 1e-14);
        }
        for k in 0..h {
            let f: f64 = (0..4).map(|t| e[t] / z * q[t][k]).sum();
            assert!((out.fused[k] - f).abs() < 1e-14);
        }
        let total: f64 = out.weights.iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn additive_scorer_is_a_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let proj = Matrix::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0));
        let bias = Matrix::from_fn(4, 1, |_, _| rng.random_range(-1.0..1.0));
        let u = Matrix::from_fn(1, 4, |_, _| rng.random_range(-1.0..1.0));
        let q: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let out = attention_fuse(
            &q,
            AttentionParams::Additive {
                proj: &proj,
                bias: &bias,
                u: &u,
            },
        )
        .unwrap();
        assert!(out.weights.iter().all(|a| *a > 0.0));
        assert!((out.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn empty_or_mismatched_states_error() {
        let w = Matrix::zeros(1, 2);
        assert!(attention_fuse(&[], AttentionParams::Linear { w: &w }).is_err());
        assert!(attention_fuse(&[vec![0.0; 3]], AttentionParams::Linear { w: &w }).is_err());
    }
}
