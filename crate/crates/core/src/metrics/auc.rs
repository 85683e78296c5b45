use super::MetricError;

/// Rank-based (Mann-Whitney) AUC with half credit for ties. `labels[i]` is
/// true for positives.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(MetricError::NonFinite);
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of 1-based ranks of positives, averaging across tie groups. Ranks are
    // kept doubled so everything stays an exact integer.
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let doubled_avg = (i + 1 + j + 1) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        doubled_rank_sum += doubled_avg * pos_in_group;
        i = j + 1;
    }
    let (p, q) = (n_pos as u128, n_neg as u128);
    let doubled_u = doubled_rank_sum - p * (p + 1);
    Ok(doubled_u as f64 / (2 * p * q) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    /// Trapezoidal area under the empirical ROC curve.
    fn trapezoid(scores: &[f64], labels: &[bool]) -> f64 {
        let mut thresholds: Vec<f64> = scores.to_vec();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let p = labels.iter().filter(|l| **l).count() as f64;
        let n = labels.len() as f64 - p;
        let mut pts = vec![(0.0, 0.0)];
        for t in thresholds {
            let tp = scores.iter().zip(labels).filter(|(s, l)| **l && **s >= t).count() as f64;
            let fp = scores.iter().zip(labels).filter(|(s, l)| !**l && **s >= t).count() as f64;
            pts.push((fp / n, tp / p));
        }
        pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
    }

    #[test]
    fn worked_examples() {
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]), Ok(0.75));
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]), Ok(1.0));
        assert_eq!(auc(&[0.5; 6], &[true, false, true, false, false, true]), Ok(0.5));
        assert_eq!(auc(&[0.1, 0.2], &[true, true]), Err(MetricError::SingleClass));
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..50).prop_flat_map(|n| {
            (
                proptest::collection::vec((0u8..12).prop_map(|v| v as f64 / 11.0), n),
                proptest::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn equals_pairwise_and_trapezoid((scores, labels) in instance()) {
            prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
            let a = auc(&scores, &labels).unwrap();
            prop_assert!((a - brute(&scores, &labels)).abs() <= 1e-12);
            prop_assert!((a - trapezoid(&scores, &labels)).abs() <= 1e-12);
        }

        #[test]
        fn monotone_invariance_and_negation(raw in proptest::collection::vec(0u16..10_000, 4..40),
                                            labels_seed in any::<u64>()) {
            let seed: Vec<f64> = raw.iter().map(|&v| f64::from(v) / 10_000.0).collect();
            let labels: Vec<bool> = (0..seed.len()).map(|i| (labels_seed >> (i % 64)) & 1 == 1).collect();
            prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
            let mut sorted = seed.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted.windows(2).all(|w| w[0] != w[1]));
            let a = auc(&seed, &labels).unwrap();
            let transformed: Vec<f64> = seed.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert_eq!(a, auc(&transformed, &labels).unwrap());
            let negated: Vec<f64> = seed.iter().map(|s| -s).collect();
            prop_assert!((a + auc(&negated, &labels).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
