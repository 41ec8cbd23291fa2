//! AUC, logloss and increment cost.

use crate::error::{Error, Result};

const CLIP: f64 = 1e-12;

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            op: "metric inputs",
            left: (scores.len(), 1),
            right: (labels.len(), 1),
        });
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {s}")));
    }
    Ok(())
}

/// Probability that a random positive outranks a random negative, ties ½.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes (got {pos} positive, {neg} negative)"
        )));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Count, for each tie group, negatives strictly below plus half the tied ones.
    let mut below_neg = 0u64;
    let mut twice_wins = 0u64;
    let mut i = 0;
    while i < idx.len() {
        let mut k = i;
        while k < idx.len() && scores[idx[k]] == scores[idx[i]] {
            k += 1;
        }
        let group_pos = idx[i..k].iter().filter(|&&t| labels[t]).count() as u64;
        let group_neg = (k - i) as u64 - group_pos;
        twice_wins += group_pos * (2 * below_neg + group_neg);
        below_neg += group_neg;
        i = k;
    }
    Ok(twice_wins as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Mean binary cross-entropy with scores clipped to `[1e-12, 1 − 1e-12]`.
pub fn logloss(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_inputs(scores, labels)?;
    if scores.is_empty() {
        return Err(Error::contract("logloss of an empty input"));
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(CLIP, 1.0 - CLIP);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / scores.len() as f64)
}

/// `C / (N (R − R₀))`; zero cost is zero, a non-positive lift is undefined.
pub fn increment_cost(cost_units: f64, users: usize, rate: f64, natural_rate: f64) -> Result<f64> {
    if cost_units == 0.0 {
        return Ok(0.0);
    }
    let lift = rate - natural_rate;
    if lift <= 0.0 || users == 0 {
        return Err(Error::UndefinedMetric(format!(
            "increment cost needs a positive lift (rate {rate} vs natural {natural_rate}, {users} users)"
        )));
    }
    let ic = cost_units / (users as f64 * lift);
    if ic.is_finite() {
        Ok(ic)
    } else {
        Err(Error::NonFinite(format!("increment cost {ic}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise_auc(s: &[f64], y: &[bool]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] && !y[j] {
                    pairs += 1.0;
                    wins += if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_examples() {
        let y = [false, false, true, true];
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &y).unwrap(), 0.75);
        assert_eq!(auc(&[0.1, 0.2, 0.3, 0.4], &y).unwrap(), 1.0);
        assert_eq!(auc(&[0.4, 0.3, 0.2, 0.1], &y).unwrap(), 0.0);
        assert_eq!(auc(&[0.5; 4], &y).unwrap(), 0.5);
        assert!(matches!(
            auc(&[0.1, 0.2], &[true, true]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn logloss_examples() {
        let ln2 = logloss(&[0.5, 0.5, 0.5], &[true, false, true]).unwrap();
        assert!((ln2 - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(logloss(&[1.0, 0.0], &[true, false]).unwrap() <= 1e-11);
        let hand = -(0.9f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((logloss(&[0.9, 0.2], &[true, false]).unwrap() - hand).abs() < 1e-15);
        assert!((hand - 0.1643).abs() < 1e-4);
        assert!(logloss(&[], &[]).is_err());
    }

    #[test]
    fn increment_cost_examples() {
        assert_eq!(increment_cost(100.0, 100, 0.2, 0.1).unwrap(), 10.0);
        assert_eq!(increment_cost(0.0, 100, 0.1, 0.1).unwrap(), 0.0);
        assert!(increment_cost(10.0, 100, 0.1, 0.1).is_err());
        assert!(increment_cost(10.0, 100, 0.05, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_enumeration(
            data in prop::collection::vec((0u8..6, any::<bool>()), 2..40)
        ) {
            let s: Vec<f64> = data.iter().map(|d| d.0 as f64 / 5.0).collect();
            let y: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(y.iter().any(|&b| b) && y.iter().any(|&b| !b));
            prop_assert!((auc(&s, &y).unwrap() - pairwise_auc(&s, &y)).abs() <= 1e-12);
        }

        #[test]
        fn auc_ignores_monotone_transforms(
            data in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..40)
        ) {
            let s: Vec<f64> = data.iter().map(|d| d.0).collect();
            let y: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(y.iter().any(|&b| b) && y.iter().any(|&b| !b));
            let t: Vec<f64> = s.iter().map(|x| (3.0 * x).exp()).collect();
            prop_assert_eq!(auc(&s, &y).unwrap(), auc(&t, &y).unwrap());
        }

        #[test]
        fn logloss_is_label_symmetric(
            data in prop::collection::vec((0.001f64..0.999, any::<bool>()), 1..40)
        ) {
            let s: Vec<f64> = data.iter().map(|d| d.0).collect();
            let y: Vec<bool> = data.iter().map(|d| d.1).collect();
            let fs: Vec<f64> = s.iter().map(|p| 1.0 - p).collect();
            let fy: Vec<bool> = y.iter().map(|b| !b).collect();
            prop_assert!((logloss(&s, &y).unwrap() - logloss(&fs, &fy).unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn increment_cost_scaling(c in 1.0f64..1e4, n in 1usize..10_000, gap in 0.01f64..0.5, k in 2.0f64..5.0) {
            let base = increment_cost(c, n, 0.1 + gap, 0.1).unwrap();
            let more = increment_cost(c * k, n, 0.1 + gap, 0.1).unwrap();
            prop_assert!((more / base - k).abs() < 1e-9);
        }
    }
}
