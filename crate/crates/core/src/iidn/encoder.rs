//! ReLU MLP over `[f, h, c]`.

use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Clone, Copy)]
pub struct DenseLayer<'a> {
    pub w: &'a Matrix,
    pub b: &'a Matrix,
}

pub(crate) struct EncoderCache {
    /// Input to each layer, then the final output.
    activations: Vec<Vec<f64>>,
    /// Smallest `|pre-activation|` over all units: distance to the nearest ReLU kink.
    pub(crate) kink_margin: f64,
}

impl EncoderCache {
    pub(crate) fn output(&self) -> &[f64] {
        self.activations.last().expect("at least the input")
    }
}

pub(crate) fn forward(input: Vec<f64>, layers: &[DenseLayer<'_>]) -> Result<EncoderCache> {
    let mut activations = vec![input];
    let mut kink_margin = f64::INFINITY;
    for layer in layers {
        let x = activations.last().expect("non-empty");
        if layer.w.cols() != x.len() || layer.b.shape() != (layer.w.rows(), 1) {
            return Err(Error::Shape {
                op: "encoder layer",
                left: layer.w.shape(),
                right: (x.len(), 1),
            });
        }
        let mut y = vec![0.0; layer.w.rows()];
        layer.w.matvec_into(x, &mut y);
        for (v, b) in y.iter_mut().zip(layer.b.as_slice()) {
            *v += b;
            kink_margin = kink_margin.min(v.abs());
            *v = v.max(0.0);
        }
        activations.push(y);
    }
    Ok(EncoderCache {
        activations,
        kink_margin,
    })
}

/// `v = MLP(concat(f, h, c))`.
pub fn encode(f: &[f64], h: &[f64], c: &[f64], layers: &[DenseLayer<'_>]) -> Result<Vec<f64>> {
    let input = [f, h, c].concat();
    forward(input, layers).map(|c| c.activations.last().cloned().expect("non-empty"))
}

/// Returns the gradient w.r.t. the encoder input.
pub(crate) fn backward(
    cache: &EncoderCache,
    layers: &[DenseLayer<'_>],
    d_out: &[f64],
    grads: &mut [(&mut Matrix, &mut Matrix)],
) -> Vec<f64> {
    let mut d = d_out.to_vec();
    for l in (0..layers.len()).rev() {
        let y = &cache.activations[l + 1];
        let x = &cache.activations[l];
        for (dv, yv) in d.iter_mut().zip(y) {
            if *yv <= 0.0 {
                *dv = 0.0;
            }
        }
        let (gw, gb) = &mut grads[l];
        gw.outer_acc(&d, x);
        for (g, dv) in gb.as_mut_slice().iter_mut().zip(&d) {
            *g += dv;
        }
        let mut dx = vec![0.0; x.len()];
        layers[l].w.matvec_t_acc(&d, &mut dx);
        d = dx;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_collapse_to_bias() {
        let w1 = Matrix::zeros(4, 6);
        let b1 = Matrix::from_vec(4, 1, vec![0.5, -0.5, 1.0, 0.0]).unwrap();
        let w2 = Matrix::zeros(2, 4);
        let b2 = Matrix::from_vec(2, 1, vec![0.3, -1.0]).unwrap();
        let layers = [DenseLayer { w: &w1, b: &b1 }, DenseLayer { w: &w2, b: &b2 }];
        let a = encode(&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0], &layers).unwrap();
        let b = encode(&[-1.0, 0.0], &[9.0, 4.0], &[0.0, 0.0], &layers).unwrap();
        assert_eq!(a, vec![0.3, 0.0]);
        assert_eq!(a, b);
    }

    #[test]
    fn seeded_forward_matches_naive_mlp() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let w1 = Matrix::from_fn(5, 6, |_, _| rng.random_range(-1.0..1.0));
        let b1 = Matrix::from_fn(5, 1, |_, _| rng.random_range(-1.0..1.0));
        let w2 = Matrix::from_fn(3, 5, |_, _| rng.random_range(-1.0..1.0));
        let b2 = Matrix::from_fn(3, 1, |_, _| rng.random_range(-1.0..1.0));
        let (f, h, c) = ([0.2, -0.1], [0.5, 0.7], [-0.3, 0.9]);
        let got = encode(
            &f,
            &h,
            &c,
            &[DenseLayer { w: &w1, b: &b1 }, DenseLayer { w: &w2, b: &b2 }],
        )
        .unwrap();

        let x = [f[0], f[1], h[0], h[1], c[0], c[1]];
        let hidden: Vec<f64> = (0..5)
            .map(|r| {
                let z: f64 = (0..6).map(|k| w1.get(r, k) * x[k]).sum::<f64>() + b1.get(r, 0);
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            })
            .collect();
        for r in 0..3 {
            let z: f64 = (0..5).map(|k| w2.get(r, k) * hidden[k]).sum::<f64>() + b2.get(r, 0);
            assert!((got[r] - z.max(0.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn wrong_input_width_is_shape_error() {
        let w = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 1);
        assert!(encode(&[1.0], &[1.0], &[], &[DenseLayer { w: &w, b: &b }]).is_err());
    }
}
