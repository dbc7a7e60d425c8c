use crate::model::PROB_EPS;

/// Rank-statistic AUC with tied scores sharing their average rank.
///
/// Returns `None` unless both classes are present.
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "one label per score");
    let pos = labels.iter().filter(|&&l| l != 0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1 ..= end share their mean
        let avg = (start + 1 + end) as f64 / 2.0;
        rank_sum += avg * order[start..end].iter().filter(|&&k| labels[k] != 0).count() as f64;
        start = end;
    }
    let p = pos as f64;
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Mean negative log-likelihood with scores clamped to `[1e-7, 1 - 1e-7]`.
pub fn logloss(scores: &[f64], labels: &[u8]) -> f64 {
    assert_eq!(scores.len(), labels.len(), "one label per score");
    if scores.is_empty() {
        return 0.0;
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &l)| {
            let s = s.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if l != 0 {
                -s.ln()
            } else {
                -(1.0 - s).ln()
            }
        })
        .sum();
    total / scores.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let (mut hit, mut n) = (0.0, 0.0);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    n += 1.0;
                    hit += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        hit / n
    }

    #[test]
    fn fixtures() {
        let s = [0.1, 0.4, 0.35, 0.8];
        let l = [0, 0, 1, 1];
        assert_eq!(brute_auc(&s, &l), 0.75);
        assert!((auc(&s, &l).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]), Some(1.0));
        assert_eq!(auc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]), Some(0.5));
        assert_eq!(auc(&[0.3, 0.4], &[1, 1]), None);
        assert!((logloss(&[0.5; 4], &[1, 0, 0, 1]) - 2f64.ln()).abs() < 1e-12);
        assert!((logloss(&[0.9, 0.2], &[1, 0]) - 0.1643).abs() < 1e-4);
        assert!(logloss(&[1.0, 0.0], &[1, 0]) < 1e-6);
    }

    #[test]
    fn base_rate_minimizes_constant_logloss() {
        let labels = [1, 0, 0, 1, 0, 0, 0, 1, 0, 0];
        let best = (1..100)
            .map(|k| k as f64 / 100.0)
            .min_by(|a, b| logloss(&[*a; 10], &labels).total_cmp(&logloss(&[*b; 10], &labels)))
            .unwrap();
        assert!((best - 0.3).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn matches_pairwise_oracle(data in proptest::collection::vec((0u8..6, 0u8..2), 2..40)) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 5.0).collect();
            let labels: Vec<u8> = data.iter().map(|(_, l)| *l).collect();
            match auc(&scores, &labels) {
                Some(a) => prop_assert!((a - brute_auc(&scores, &labels)).abs() < 1e-12),
                None => prop_assert!(labels.iter().all(|&l| l == labels[0])),
            }
        }

        #[test]
        fn monotone_invariance_and_complement(raw in proptest::collection::vec((-1e3f64..1e3, 0u8..2), 2..40)) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s).collect();
            let labels: Vec<u8> = raw.iter().map(|(_, l)| *l).collect();
            if let Some(a) = auc(&scores, &labels) {
                let squashed: Vec<f64> = scores.iter().map(|s| (s / 100.0).tanh() * 3.0 + 1.0).collect();
                let b = auc(&squashed, &labels).unwrap();
                let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
                let c = auc(&neg, &labels).unwrap();
                let distinct = {
                    let mut s = scores.clone();
                    s.sort_by(f64::total_cmp);
                    s.windows(2).all(|w| w[0] != w[1])
                };
                let squashed_distinct = {
                    let mut s = squashed.clone();
                    s.sort_by(f64::total_cmp);
                    s.windows(2).all(|w| w[0] != w[1])
                };
                if distinct && squashed_distinct {
                    prop_assert!((a - b).abs() < 1e-12);
                }
                if distinct {
                    prop_assert!((a + c - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
