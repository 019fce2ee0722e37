//! Threshold-free detection metrics. Positives (label 1) are
//! in-distribution scores, negatives are test scores; larger means "more
//! in-distribution".

use crate::{Error, Result};

fn check(pos: &[f64], neg: &[f64]) -> Result<()> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Contract(format!(
            "metrics need positives and negatives, got {} and {}",
            pos.len(),
            neg.len()
        )));
    }
    if pos.iter().chain(neg).any(|v| v.is_nan()) {
        return Err(Error::NonFinite("NaN score".into()));
    }
    Ok(())
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Mann–Whitney AUC with half credit for ties.
pub fn auc_roc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check(pos, neg)?;
    let neg = sorted(neg);
    // Twice the Mann–Whitney count, kept integral.
    let twice: u64 = pos
        .iter()
        .map(|&p| {
            let below = neg.partition_point(|&n| n < p) as u64;
            let upto = neg.partition_point(|&n| n <= p) as u64;
            2 * below + (upto - below)
        })
        .sum();
    Ok(twice as f64 / (2.0 * pos.len() as f64 * neg.len() as f64))
}

/// Smallest false-positive rate among observed-score thresholds `t` that
/// keep at least 95% of positives at or above `t`.
pub fn fpr_at_95_tpr(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check(pos, neg)?;
    let p = sorted(pos);
    let need = (95 * p.len()).div_ceil(100);
    // The largest threshold with TPR ≥ 0.95 is the `need`-th largest positive.
    let t = p[p.len() - need];
    let fp = neg.iter().filter(|&&n| n >= t).count();
    Ok(fp as f64 / neg.len() as f64)
}

/// Step-wise average precision: `Σ (Rₖ − Rₖ₋₁) Pₖ` over distinct
/// thresholds, highest first.
pub fn auc_pr(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check(pos, neg)?;
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total = pos.len() as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut ap, mut prev_recall) = (0.0, 0.0);
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / total;
        ap += (recall - prev_recall) * tp as f64 / (tp + fp) as f64;
        prev_recall = recall;
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub aucroc: f64,
    pub fpr95: f64,
    pub aucpr: f64,
    pub positives: usize,
    pub negatives: usize,
}

pub fn evaluate(pos: &[f64], neg: &[f64]) -> Result<MetricsReport> {
    Ok(MetricsReport {
        aucroc: auc_roc(pos, neg)?,
        fpr95: fpr_at_95_tpr(pos, neg)?,
        aucpr: auc_pr(pos, neg)?,
        positives: pos.len(),
        negatives: neg.len(),
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::rng::seeded;

    fn brute_auc(pos: &[f64], neg: &[f64]) -> f64 {
        let mut c = 0.0;
        for &p in pos {
            for &n in neg {
                c += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        c / (pos.len() * neg.len()) as f64
    }

    /// Sweeps every observed score as a threshold.
    fn brute_fpr95(pos: &[f64], neg: &[f64]) -> f64 {
        pos.iter()
            .chain(neg)
            .filter(|&&t| pos.iter().filter(|&&p| p >= t).count() * 100 >= 95 * pos.len())
            .map(|&t| neg.iter().filter(|&&n| n >= t).count() as f64 / neg.len() as f64)
            .fold(1.0, f64::min)
    }

    /// Average precision from the full list of (recall, precision) points.
    fn brute_ap(pos: &[f64], neg: &[f64]) -> f64 {
        let mut ts: Vec<f64> = pos.iter().chain(neg).copied().collect();
        ts.sort_by(|a, b| b.total_cmp(a));
        ts.dedup();
        let mut prev = 0.0;
        let mut ap = 0.0;
        for t in ts {
            let tp = pos.iter().filter(|&&p| p >= t).count() as f64;
            let fp = neg.iter().filter(|&&n| n >= t).count() as f64;
            let r = tp / pos.len() as f64;
            ap += (r - prev) * tp / (tp + fp);
            prev = r;
        }
        ap
    }

    #[test]
    fn separated_scores() {
        let (pos, neg) = ([2.0, 3.0], [0.0, 1.0]);
        assert_eq!(auc_roc(&pos, &neg).unwrap(), 1.0);
        assert_eq!(fpr_at_95_tpr(&pos, &neg).unwrap(), 0.0);
        assert_eq!(auc_pr(&pos, &neg).unwrap(), 1.0);
        assert_eq!(auc_pr(&[5.0], &neg).unwrap(), 1.0);
    }

    #[test]
    fn identical_sets() {
        let s: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(auc_roc(&s, &s).unwrap(), 0.5);
        assert_eq!(fpr_at_95_tpr(&s, &s).unwrap(), 0.95);
        assert_eq!(fpr_at_95_tpr(&s, &s).unwrap(), brute_fpr95(&s, &s));
        assert!((auc_pr(&s, &s).unwrap() - brute_ap(&s, &s)).abs() < 1e-12);
        let flat = [1.0; 10];
        assert_eq!(fpr_at_95_tpr(&flat, &flat).unwrap(), 1.0);
    }

    #[test]
    fn matches_brute_force_on_random_scores() {
        let mut rng = seeded(3);
        for _ in 0..20 {
            let pos: Vec<f64> = (0..20).map(|_| (rng.random_range(0..8) as f64) * 0.5).collect();
            let neg: Vec<f64> = (0..17).map(|_| (rng.random_range(0..8) as f64) * 0.4).collect();
            assert_eq!(auc_roc(&pos, &neg).unwrap(), brute_auc(&pos, &neg));
            assert_eq!(fpr_at_95_tpr(&pos, &neg).unwrap(), brute_fpr95(&pos, &neg));
            assert!((auc_pr(&pos, &neg).unwrap() - brute_ap(&pos, &neg)).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_and_nan_inputs() {
        assert!(matches!(auc_roc(&[], &[1.0]), Err(Error::Contract(_))));
        assert!(fpr_at_95_tpr(&[1.0], &[]).is_err());
        assert!(auc_pr(&[f64::NAN], &[1.0]).is_err());
    }

    fn scores(max: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((-40i32..40).prop_map(|v| v as f64 / 4.0), 1..max)
    }

    proptest! {
        #[test]
        fn auc_is_exact_mann_whitney(pos in scores(50), neg in scores(50)) {
            let a = auc_roc(&pos, &neg).unwrap();
            prop_assert_eq!(a, brute_auc(&pos, &neg));
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn auc_complements_without_ties(mut pos in scores(30), neg in scores(30)) {
            for p in pos.iter_mut() {
                *p += 0.1;
            }
            let s = auc_roc(&pos, &neg).unwrap() + auc_roc(&neg, &pos).unwrap();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn metrics_invariant_under_increasing_maps(pos in scores(40), neg in scores(40)) {
            let f = |v: &[f64]| v.iter().map(|x| (0.7 * x).exp() * 3.0 - 1.0).collect::<Vec<_>>();
            let (a, b) = (evaluate(&pos, &neg).unwrap(), evaluate(&f(&pos), &f(&neg)).unwrap());
            prop_assert_eq!(a.aucroc, b.aucroc);
            prop_assert_eq!(a.fpr95, b.fpr95);
            prop_assert!((a.aucpr - b.aucpr).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a.fpr95) && (0.0..=1.0 + 1e-12).contains(&a.aucpr));
        }
    }
}
