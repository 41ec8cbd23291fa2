//! Scalar and vector activations.

/// Logistic sigmoid, evaluated without overflow for either sign.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    x.tanh()
}

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Softmax with max-subtraction.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let mut out = xs.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_reference_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        // 1 / (1 + 1/3) = 3/4
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!((sigmoid(-3f64.ln()) - 0.25).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn bounded_ranges() {
        for i in -300..=300 {
            let x = i as f64 / 10.0;
            let s = sigmoid(x);
            assert!(s > 0.0 && s < 1.0, "sigmoid({x}) = {s}");
            let t = tanh(x / 10.0);
            assert!(t > -1.0 && t < 1.0);
            assert!(relu(x) >= 0.0);
        }
    }

    #[test]
    fn softmax_of_constant_is_uniform() {
        let p = softmax(&[2.5; 7]);
        for v in p {
            assert!((v - 1.0 / 7.0).abs() < 1e-15);
        }
    }

    proptest::proptest! {
        #[test]
        fn softmax_sums_to_one_for_large_inputs(xs in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
            let p = softmax(&xs);
            let sum: f64 = p.iter().sum();
            proptest::prop_assert!((sum - 1.0).abs() <= 1e-12);
            proptest::prop_assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}
