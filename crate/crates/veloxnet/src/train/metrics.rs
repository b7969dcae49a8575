//! Confusion-matrix metrics: per-class and support-weighted precision,
//! recall and F1. Zero-denominator scores are defined as 0.

use serde::Serialize;

/// Rows are true classes, columns are predictions.
#[derive(Clone, Debug, Serialize)]
pub struct MetricsReport {
    pub confusion: Vec<Vec<u64>>,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    pub per_class_f1: Vec<f64>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
    pub loss: f64,
    pub samples: u64,
}

pub fn metrics_from_confusion(confusion: &[Vec<u64>], loss: f64) -> MetricsReport {
    let k = confusion.len();
    let total: u64 = confusion.iter().map(|r| r.iter().sum::<u64>()).sum();
    let mut precision = vec![0.0; k];
    let mut recall = vec![0.0; k];
    let mut f1 = vec![0.0; k];
    let mut weighted = [0.0f64; 3];
    let mut diag = 0u64;
    for c in 0..k {
        let tp = confusion[c][c];
        diag += tp;
        let support: u64 = confusion[c].iter().sum();
        let predicted: u64 = confusion.iter().map(|r| r[c]).sum();
        let p = if predicted > 0 {
            tp as f64 / predicted as f64
        } else {
            0.0
        };
        let r = if support > 0 {
            tp as f64 / support as f64
        } else {
            0.0
        };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        precision[c] = p;
        recall[c] = r;
        f1[c] = f;
        if total > 0 {
            let w = support as f64 / total as f64;
            weighted[0] += w * p;
            weighted[1] += w * r;
            weighted[2] += w * f;
        }
    }
    MetricsReport {
        confusion: confusion.to_vec(),
        per_class_precision: precision,
        per_class_recall: recall,
        per_class_f1: f1,
        weighted_precision: weighted[0],
        weighted_recall: weighted[1],
        weighted_f1: weighted[2],
        accuracy: if total > 0 {
            diag as f64 / total as f64
        } else {
            0.0
        },
        loss,
        samples: total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_predictions_score_one() {
        let m = metrics_from_confusion(&[vec![4, 0], vec![0, 6]], 0.0);
        assert_eq!(m.weighted_precision, 1.0);
        assert_eq!(m.weighted_recall, 1.0);
        assert_eq!(m.weighted_f1, 1.0);
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn worked_three_class_example_matches_oracle() {
        // [[5,0,0],[0,0,3],[0,0,2]]: per-class F1 = (1, 0, 4/7), weighted by
        // supports (5,3,2)/10 -> 43/70. Cross-checked against scikit-learn's
        // weighted f1/precision/recall on the expanded label pairs.
        let m = metrics_from_confusion(&[vec![5, 0, 0], vec![0, 0, 3], vec![0, 0, 2]], 0.0);
        assert!((m.per_class_f1[2] - 4.0 / 7.0).abs() < 1e-15);
        assert!((m.weighted_f1 - 43.0 / 70.0).abs() < 1e-15);
        assert!((m.weighted_precision - 0.58).abs() < 1e-15);
        assert!((m.weighted_recall - 0.7).abs() < 1e-15);
    }

    #[test]
    fn all_one_class_predictor_on_balanced_two_class() {
        // classes: (P=0.5, R=1, F1=2/3) and (0, 0, 0), weights 1/2 each
        let m = metrics_from_confusion(&[vec![7, 0], vec![7, 0]], 0.0);
        assert!((m.weighted_f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    /// Brute-force oracle: expand the confusion matrix into (true, pred)
    /// pairs and recompute every metric from raw pair counts.
    fn brute_force(confusion: &[Vec<u64>]) -> (f64, f64, f64) {
        let k = confusion.len();
        let mut pairs = Vec::new();
        for (t, row) in confusion.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                for _ in 0..n {
                    pairs.push((t, p));
                }
            }
        }
        let n = pairs.len() as f64;
        let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
        for c in 0..k {
            let tp = pairs.iter().filter(|&&(t, p)| t == c && p == c).count() as f64;
            let pred = pairs.iter().filter(|&&(_, p)| p == c).count() as f64;
            let sup = pairs.iter().filter(|&&(t, _)| t == c).count() as f64;
            let p = if pred > 0.0 { tp / pred } else { 0.0 };
            let r = if sup > 0.0 { tp / sup } else { 0.0 };
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            wp += sup / n * p;
            wr += sup / n * r;
            wf += sup / n * f;
        }
        (wp, wr, wf)
    }

    #[test]
    fn weighted_metrics_match_brute_force_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..150 {
            let k = rng.gen_range(2..=6);
            let mut confusion = vec![vec![0u64; k]; k];
            // ensure at least one sample total
            loop {
                for row in confusion.iter_mut() {
                    for v in row.iter_mut() {
                        *v = rng.gen_range(0..7);
                    }
                }
                if confusion.iter().flatten().sum::<u64>() > 0 {
                    break;
                }
            }
            let m = metrics_from_confusion(&confusion, 0.0);
            let (wp, wr, wf) = brute_force(&confusion);
            assert!((m.weighted_precision - wp).abs() < 1e-12);
            assert!((m.weighted_recall - wr).abs() < 1e-12);
            assert!((m.weighted_f1 - wf).abs() < 1e-12);
            assert!(m.confusion.iter().flatten().sum::<u64>() == m.samples);
            for v in m
                .per_class_f1
                .iter()
                .chain(&m.per_class_precision)
                .chain(&m.per_class_recall)
            {
                assert!((0.0..=1.0).contains(v));
            }
        }
    }
}
