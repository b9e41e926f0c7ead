use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `(homogeneity, completeness, v)` with natural-log entropies.
pub fn homogeneity_completeness_v<A: Ord, B: Ord>(gold: &[A], pred: &[B]) -> Result<(f64, f64, f64)> {
    if gold.len() != pred.len() {
        return Err(Error::Shape(format!(
            "{} gold labels vs {} cluster ids",
            gold.len(),
            pred.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::InvalidInput("v-measure of an empty labeling".into()));
    }
    let n = gold.len() as f64;
    let mut gold_counts: BTreeMap<&A, usize> = BTreeMap::new();
    let mut pred_counts: BTreeMap<&B, usize> = BTreeMap::new();
    let mut joint: BTreeMap<(&A, &B), usize> = BTreeMap::new();
    for (g, p) in gold.iter().zip(pred) {
        *gold_counts.entry(g).or_default() += 1;
        *pred_counts.entry(p).or_default() += 1;
        *joint.entry((g, p)).or_default() += 1;
    }
    let h_gold = entropy(gold_counts.values().copied(), n);
    let h_pred = entropy(pred_counts.values().copied(), n);
    // H(gold | pred) = -sum n_gp/n * ln(n_gp / n_p), and symmetrically.
    let mut h_gold_given_pred = 0.0;
    let mut h_pred_given_gold = 0.0;
    for (&(g, p), &c) in &joint {
        let c = c as f64;
        h_gold_given_pred -= c / n * (c / pred_counts[p] as f64).ln();
        h_pred_given_gold -= c / n * (c / gold_counts[g] as f64).ln();
    }
    let h = if h_gold == 0.0 {
        1.0
    } else {
        1.0 - h_gold_given_pred / h_gold
    };
    let c = if h_pred == 0.0 {
        1.0
    } else {
        1.0 - h_pred_given_gold / h_pred
    };
    let v = if h + c == 0.0 { 0.0 } else { 2.0 * h * c / (h + c) };
    Ok((h, c, v))
}

/// Harmonic mean of homogeneity and completeness.
pub fn v_measure<A: Ord, B: Ord>(gold: &[A], pred: &[B]) -> Result<f64> {
    Ok(homogeneity_completeness_v(gold, pred)?.2.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relabeling_is_perfect() {
        assert_eq!(v_measure(&[0, 0, 1, 1, 2], &["b", "b", "a", "a", "c"]).unwrap(), 1.0);
    }

    #[test]
    fn single_cluster_scores_zero() {
        let (h, c, v) = homogeneity_completeness_v(&[0, 0, 1, 1], &[7, 7, 7, 7]).unwrap();
        assert_eq!(h, 0.0);
        assert_eq!(c, 1.0);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn hand_entropy_example() {
        // gold [0,0,1,1], pred [0,1,1,1]:
        // H(G) = ln 2, H(P) = -(1/4 ln 1/4 + 3/4 ln 3/4)
        // H(G|P) = -(2/4 * (1/3 ln 1/3 + 2/3 ln 2/3)) , H(P|G) = -(2/4 ln 1/2)
        let ln = f64::ln;
        let hg = 2f64.ln();
        let hp = -(0.25 * ln(0.25) + 0.75 * ln(0.75));
        let hgp = -(0.25 * ln(1.0 / 3.0) + 0.5 * ln(2.0 / 3.0));
        let hpg = -(0.25 * ln(0.5) + 0.25 * ln(0.5));
        let h = 1.0 - hgp / hg;
        let c = 1.0 - hpg / hp;
        let expected = 2.0 * h * c / (h + c);
        let v = v_measure(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
        assert!((v - expected).abs() < 1e-15, "{v} vs {expected}");
        assert!((v - 0.34371101848545077).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        assert!(v_measure(&[0, 1], &[0]).is_err());
    }
}
