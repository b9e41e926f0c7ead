use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};

/// Fraction of positions where `pred` equals `gold`.
pub fn accuracy<T: PartialEq>(pred: &[T], gold: &[T]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("accuracy of an empty list".into()));
    }
    let hits = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Indices sorted by descending score, ties by ascending index.
pub(crate) fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| desc_then_index(scores[a], a, scores[b], b));
    idx
}

pub(crate) fn desc_then_index(sa: f64, a: usize, sb: f64, b: usize) -> Ordering {
    sb.total_cmp(&sa).then(a.cmp(&b))
}

fn check_binary(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    Ok(())
}

/// Mean of precision@r over the ranks r holding a positive.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_binary(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 {
        return Err(Error::InvalidInput("average precision needs a positive".into()));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, &i) in rank_desc(scores).iter().enumerate() {
        if labels[i] == 1 {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdMetrics {
    /// Scores strictly above the threshold are predicted positive.
    pub threshold: f64,
    pub accuracy: f64,
    /// F1 of the positive class; 0 when nothing is predicted positive.
    pub f1: f64,
}

/// Scans `-inf`, the midpoints between consecutive distinct scores, and
/// `+inf`, keeping the most accurate cut (ties go to the larger threshold).
pub fn best_threshold_metrics(scores: &[f64], labels: &[u8]) -> Result<ThresholdMetrics> {
    check_binary(scores, labels)?;
    let total_pos = labels.iter().filter(|&&l| l == 1).count();
    let n = labels.len();
    if total_pos == 0 || total_pos == n {
        return Err(Error::InvalidInput("best-threshold metrics need both classes".into()));
    }
    // Ascending by score; sweep the cut upward. Below the cut: predicted negative.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));

    let eval = |threshold: f64, neg_below: usize, pos_below: usize| {
        // Predicted positive = everything above the cut.
        let tp = total_pos - pos_below;
        let fp = (n - total_pos) - neg_below;
        let tn = neg_below;
        let fneg = pos_below;
        let acc = (tp + tn) as f64 / n as f64;
        let f1 = if tp == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
        };
        ThresholdMetrics {
            threshold,
            accuracy: acc,
            f1,
        }
    };

    let mut best = eval(f64::NEG_INFINITY, 0, 0);
    let (mut neg_below, mut pos_below) = (0usize, 0usize);
    let mut i = 0;
    while i < n {
        let s = scores[order[i]];
        while i < n && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            i += 1;
        }
        let threshold = if i < n {
            s + (scores[order[i]] - s) / 2.0
        } else {
            f64::INFINITY
        };
        let cand = eval(threshold, neg_below, pos_below);
        if cand.accuracy >= best.accuracy {
            best = cand;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 1], &[2, 2]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 2, 3, 0]).unwrap(), 0.75);
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn ap_cases() {
        assert_eq!(average_precision(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
        assert_eq!(average_precision(&[0.9, 0.1], &[0, 1]).unwrap(), 0.5);
        let ap = average_precision(&[0.9, 0.8, 0.7, 0.6], &[1, 0, 1, 0]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert!(average_precision(&[0.1, 0.2], &[0, 0]).is_err());
    }

    #[test]
    fn ap_ties_follow_index_order() {
        // All scores tied: ranking is index order, so a lone positive at the
        // end scores 1/n, the positive rate.
        assert_eq!(average_precision(&[0.3; 4], &[0, 0, 0, 1]).unwrap(), 0.25);
        assert_eq!(average_precision(&[0.3; 4], &[1, 0, 0, 0]).unwrap(), 1.0);
    }

    #[test]
    fn threshold_separated() {
        let m = best_threshold_metrics(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.f1, 1.0);
        assert!((m.threshold - 0.5).abs() < 1e-15);
    }

    #[test]
    fn threshold_uninformative() {
        let m = best_threshold_metrics(&[0.1, 0.2, 0.3, 0.4], &[1, 0, 1, 0]).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.threshold, f64::INFINITY);
        assert_eq!(m.f1, 0.0);
    }

    #[test]
    fn threshold_all_equal_scores() {
        let m = best_threshold_metrics(&[0.5; 4], &[1, 0, 1, 0]).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert!(m.threshold.is_infinite());
    }

    #[test]
    fn threshold_single_class_rejected() {
        assert!(best_threshold_metrics(&[0.1, 0.2], &[1, 1]).is_err());
    }
}
