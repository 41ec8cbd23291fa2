//! LSTM cell and layer stack with backpropagation through time.
//!
//! Gate rows of the packed weight matrix are ordered forget, input,
//! candidate, output. Each gate reads `[q_{t-1}, s_t]`.

use crate::error::{Error, Result};
use crate::nn::{sigmoid, Matrix};

/// Weights of one layer: `w` is `4H × (H + input)`, `b` is `4H × 1`.
#[derive(Clone, Copy)]
pub struct LstmLayer<'a> {
    pub w: &'a Matrix,
    pub b: &'a Matrix,
}

impl LstmLayer<'_> {
    pub fn hidden(&self) -> usize {
        self.w.rows() / 4
    }

    pub fn input(&self) -> usize {
        self.w.cols() - self.hidden()
    }

    fn check(&self, x: usize) -> Result<()> {
        let h = self.hidden();
        if self.w.rows() % 4 != 0 || self.w.cols() < h || self.b.shape() != (4 * h, 1) {
            return Err(Error::Shape {
                op: "lstm weights",
                left: self.w.shape(),
                right: self.b.shape(),
            });
        }
        if x != self.input() {
            return Err(Error::Shape {
                op: "lstm input",
                left: (self.input(), 1),
                right: (x, 1),
            });
        }
        Ok(())
    }
}

/// Everything one step needs for its backward pass.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    /// `[q_{t-1}, x_t]`
    z: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates, packed like the weight rows.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    pub(crate) q: Vec<f64>,
    c: Vec<f64>,
}

fn step(layer: LstmLayer<'_>, x: &[f64], q_prev: &[f64], c_prev: &[f64]) -> StepCache {
    let h = layer.hidden();
    let mut z = Vec::with_capacity(h + x.len());
    z.extend_from_slice(q_prev);
    z.extend_from_slice(x);
    let mut gates = vec![0.0; 4 * h];
    layer.w.matvec_into(&z, &mut gates);
    let b = layer.b.as_slice();
    for (k, g) in gates.iter_mut().enumerate() {
        let a = *g + b[k];
        *g = if (2 * h..3 * h).contains(&k) {
            a.tanh()
        } else {
            sigmoid(a)
        };
    }
    let mut c = vec![0.0; h];
    let mut tanh_c = vec![0.0; h];
    let mut q = vec![0.0; h];
    for j in 0..h {
        let (f, i, cc, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
        c[j] = f * c_prev[j] + i * cc;
        tanh_c[j] = c[j].tanh();
        q[j] = o * tanh_c[j];
    }
    StepCache {
        z,
        c_prev: c_prev.to_vec(),
        gates,
        tanh_c,
        q,
        c,
    }
}

/// One application of the cell: returns `(q_t, c_t)`.
pub fn lstm_cell(x: &[f64], q_prev: &[f64], c_prev: &[f64], layer: LstmLayer<'_>) -> Result<(Vec<f64>, Vec<f64>)> {
    layer.check(x.len())?;
    let h = layer.hidden();
    if q_prev.len() != h || c_prev.len() != h {
        return Err(Error::Shape {
            op: "lstm state",
            left: (h, 1),
            right: (q_prev.len(), c_prev.len()),
        });
    }
    let s = step(layer, x, q_prev, c_prev);
    Ok((s.q, s.c))
}

pub(crate) type StackCache = Vec<Vec<StepCache>>;

pub(crate) fn forward_stack(inputs: &[Vec<f64>], layers: &[LstmLayer<'_>]) -> Result<StackCache> {
    if inputs.is_empty() {
        return Err(Error::contract("LSTM needs a sequence of at least one step"));
    }
    let mut caches: StackCache = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate() {
        let below: Vec<&[f64]> = if l == 0 {
            inputs.iter().map(|v| v.as_slice()).collect()
        } else {
            caches[l - 1].iter().map(|s| s.q.as_slice()).collect()
        };
        layer.check(below[0].len())?;
        let h = layer.hidden();
        let mut q = vec![0.0; h];
        let mut c = vec![0.0; h];
        let mut steps = Vec::with_capacity(below.len());
        for x in below {
            let s = step(*layer, x, &q, &c);
            q.clone_from(&s.q);
            c.clone_from(&s.c);
            steps.push(s);
        }
        caches.push(steps);
    }
    Ok(caches)
}

/// Runs the stack from zero state and returns the top layer's outputs `q_1..q_T`.
pub fn run_lstm_stack(inputs: &[Vec<f64>], layers: &[LstmLayer<'_>]) -> Result<Vec<Vec<f64>>> {
    let caches = forward_stack(inputs, layers)?;
    Ok(caches
        .last()
        .map(|top| top.iter().map(|s| s.q.clone()).collect())
        .unwrap_or_default())
}

/// BPTT through the whole stack. `d_top[t]` is the loss gradient w.r.t. the
/// top output at step `t`. Accumulates into `grads[l] = (dW, db)` and returns
/// gradients w.r.t. the stack inputs.
pub(crate) fn backward_stack(
    caches: &StackCache,
    layers: &[LstmLayer<'_>],
    d_top: Vec<Vec<f64>>,
    grads: &mut [(&mut Matrix, &mut Matrix)],
) -> Vec<Vec<f64>> {
    let mut d_out = d_top;
    for l in (0..layers.len()).rev() {
        let layer = layers[l];
        let h = layer.hidden();
        let steps = &caches[l];
        let (gw, gb) = &mut grads[l];
        let mut d_in = vec![vec![0.0; layer.input()]; steps.len()];
        let mut dq_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut da = vec![0.0; 4 * h];
        let mut dz = vec![0.0; layer.w.cols()];
        for t in (0..steps.len()).rev() {
            let s = &steps[t];
            for j in 0..h {
                let dq = d_out[t][j] + dq_next[j];
                let (f, i, cc, o) = (s.gates[j], s.gates[h + j], s.gates[2 * h + j], s.gates[3 * h + j]);
                let d_o = dq * s.tanh_c[j];
                let dc = dc_next[j] + dq * o * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
                da[j] = dc * s.c_prev[j] * f * (1.0 - f);
                da[h + j] = dc * cc * i * (1.0 - i);
                da[2 * h + j] = dc * i * (1.0 - cc * cc);
                da[3 * h + j] = d_o * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            gw.outer_acc(&da, &s.z);
            for (g, d) in gb.as_mut_slice().iter_mut().zip(&da) {
                *g += d;
            }
            dz.iter_mut().for_each(|v| *v = 0.0);
            layer.w.matvec_t_acc(&da, &mut dz);
            dq_next.copy_from_slice(&dz[..h]);
            d_in[t].copy_from_slice(&dz[h..]);
        }
        d_out = d_in;
    }
    d_out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-0.8..0.8))
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Per-element transcription of the six gate equations.
    fn oracle_cell(x: &[f64], q: &[f64], c: &[f64], w: &Matrix, b: &Matrix) -> (Vec<f64>, Vec<f64>) {
        let h = q.len();
        let input: Vec<f64> = q.iter().chain(x).copied().collect();
        let pre = |gate: usize, j: usize| {
            let row = gate * h + j;
            let mut acc = b.get(row, 0);
            for (k, v) in input.iter().enumerate() {
                acc += w.get(row, k) * v;
            }
            acc
        };
        let mut q_out = vec![0.0; h];
        let mut c_out = vec![0.0; h];
        for j in 0..h {
            let g = sig(pre(0, j));
            let i = sig(pre(1, j));
            let cc = pre(2, j).tanh();
            let o = sig(pre(3, j));
            c_out[j] = g * c[j] + i * cc;
            q_out[j] = o * c_out[j].tanh();
        }
        (q_out, c_out)
    }

    #[test]
    fn zero_weights_give_half_gates() {
        let (h, x) = (3, 2);
        let w = Matrix::zeros(4 * h, h + x);
        let b = Matrix::zeros(4 * h, 1);
        let layer = LstmLayer { w: &w, b: &b };
        let (q, c) = lstm_cell(&[0.3, -2.0], &[0.0; 3], &[0.0; 3], layer).unwrap();
        assert_eq!(q, vec![0.0; 3]);
        assert_eq!(c, vec![0.0; 3]);

        let c_prev = [1.0, -0.4, 2.5];
        let (q, c) = lstm_cell(&[0.3, -2.0], &[0.1, 0.2, 0.3], &c_prev, layer).unwrap();
        for j in 0..3 {
            assert_eq!(c[j], 0.5 * c_prev[j]);
            assert_eq!(q[j], 0.5 * (0.5 * c_prev[j]).tanh());
        }
    }

    #[test]
    fn seeded_cell_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (h, x) = (4, 3);
        let w = rand_mat(4 * h, h + x, &mut rng);
        let b = rand_mat(4 * h, 1, &mut rng);
        let xs = rand_mat(x, 1, &mut rng).into_vec();
        let q0 = rand_mat(h, 1, &mut rng).into_vec();
        let c0 = rand_mat(h, 1, &mut rng).into_vec();
        let (q, c) = lstm_cell(&xs, &q0, &c0, LstmLayer { w: &w, b: &b }).unwrap();
        let (eq, ec) = oracle_cell(&xs, &q0, &c0, &w, &b);
        for j in 0..h {
            assert!((q[j] - eq[j]).abs() < 1e-14);
            assert!((c[j] - ec[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn seeded_two_layer_stack_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (h, x, t) = (4, 3, 5);
        let w1 = rand_mat(4 * h, h + x, &mut rng);
        let b1 = rand_mat(4 * h, 1, &mut rng);
        let w2 = rand_mat(4 * h, 2 * h, &mut rng);
        let b2 = rand_mat(4 * h, 1, &mut rng);
        let inputs: Vec<Vec<f64>> = (0..t).map(|_| rand_mat(x, 1, &mut rng).into_vec()).collect();
        let layers = [LstmLayer { w: &w1, b: &b1 }, LstmLayer { w: &w2, b: &b2 }];
        let got = run_lstm_stack(&inputs, &layers).unwrap();

        let (mut q1, mut c1, mut q2, mut c2) = (vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]);
        for (step, xin) in inputs.iter().enumerate() {
            (q1, c1) = oracle_cell(xin, &q1, &c1, &w1, &b1);
            (q2, c2) = oracle_cell(&q1, &q2, &c2, &w2, &b2);
            for j in 0..h {
                assert!((got[step][j] - q2[j]).abs() < 1e-12);
                assert!(got[step][j].abs() < 1.0);
            }
        }
    }

    #[test]
    fn single_step_is_one_cell_per_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (h, x) = (3, 2);
        let w1 = rand_mat(4 * h, h + x, &mut rng);
        let b1 = rand_mat(4 * h, 1, &mut rng);
        let w2 = rand_mat(4 * h, 2 * h, &mut rng);
        let b2 = rand_mat(4 * h, 1, &mut rng);
        let xin = vec![0.4, -0.9];
        let l1 = LstmLayer { w: &w1, b: &b1 };
        let l2 = LstmLayer { w: &w2, b: &b2 };
        let out = run_lstm_stack(&[xin.clone()], &[l1, l2]).unwrap();
        let (q1, _) = lstm_cell(&xin, &[0.0; 3], &[0.0; 3], l1).unwrap();
        let (q2, _) = lstm_cell(&q1, &[0.0; 3], &[0.0; 3], l2).unwrap();
        assert_eq!(out, vec![q2]);
    }

    #[test]
    fn empty_sequence_and_bad_shapes_are_errors() {
        let w = Matrix::zeros(8, 4);
        let b = Matrix::zeros(8, 1);
        let l = LstmLayer { w: &w, b: &b };
        assert!(matches!(run_lstm_stack(&[], &[l]), Err(Error::Contract(_))));
        assert!(matches!(
            lstm_cell(&[0.0; 3], &[0.0; 2], &[0.0; 2], l),
            Err(Error::Shape { .. })
        ));
    }
}
