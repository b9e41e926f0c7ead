use std::collections::{BTreeMap, BTreeSet};

use super::check_rows;
use crate::embed::dot;
use crate::error::{Error, Result};

fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let denom = dot(a, a).sqrt() * dot(b, b).sqrt();
    if denom == 0.0 {
        1.0
    } else {
        1.0 - dot(a, b) / denom
    }
}

/// Predicts label sets by majority vote among the `k` cosine-nearest training
/// rows: a label is kept when at least `ceil((k + 1) / 2)` neighbors carry it.
pub fn knn_predict_multilabel<L: Ord + Clone>(
    train_x: &[Vec<f64>],
    train_y: &[BTreeSet<L>],
    test_x: &[Vec<f64>],
    k: usize,
) -> Result<Vec<BTreeSet<L>>> {
    if train_x.is_empty() {
        return Err(Error::InvalidInput("kNN with an empty training set".into()));
    }
    if train_x.len() != train_y.len() {
        return Err(Error::Shape(format!(
            "{} training rows vs {} label sets",
            train_x.len(),
            train_y.len()
        )));
    }
    if k == 0 || k > train_x.len() {
        return Err(Error::InvalidInput(format!("k = {k} must be in 1..={}", train_x.len())));
    }
    let d = check_rows(train_x)?;
    let dt = check_rows(test_x)?;
    if !test_x.is_empty() && dt != d {
        return Err(Error::Shape(format!("test dim {dt} vs train dim {d}")));
    }
    let need = (k + 1).div_ceil(2);
    Ok(test_x
        .iter()
        .map(|q| {
            let mut order: Vec<(f64, usize)> = train_x
                .iter()
                .enumerate()
                .map(|(i, t)| (cosine_distance(q, t), i))
                .collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut votes: BTreeMap<&L, usize> = BTreeMap::new();
            for &(_, i) in order.iter().take(k) {
                for l in &train_y[i] {
                    *votes.entry(l).or_default() += 1;
                }
            }
            votes
                .into_iter()
                .filter(|&(_, v)| v >= need)
                .map(|(l, _)| l.clone())
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[&'static str]) -> BTreeSet<&'static str> {
        v.iter().copied().collect()
    }

    #[test]
    fn majority_threshold() {
        for (k, need) in [(1, 1), (2, 2), (3, 2), (4, 3), (5, 3), (6, 4)] {
            assert_eq!((k + 1usize).div_ceil(2), need, "k = {k}");
        }
    }

    #[test]
    fn replicated_point_returns_its_labels() {
        let train = vec![vec![1.0, 0.0]; 5];
        let labels = vec![set(&["a", "b"]); 5];
        let p = knn_predict_multilabel(&train, &labels, &[vec![2.0, 0.0]], 5).unwrap();
        assert_eq!(p[0], set(&["a", "b"]));
    }

    #[test]
    fn two_of_five_is_not_enough() {
        let train = vec![vec![1.0, 0.0]; 5];
        let labels = vec![set(&["a"]), set(&["a"]), set(&["b"]), set(&["b"]), set(&["b"])];
        let p = knn_predict_multilabel(&train, &labels, &[vec![1.0, 0.0]], 5).unwrap();
        assert_eq!(p[0], set(&["b"]));
    }

    #[test]
    fn errors() {
        let empty: Vec<Vec<f64>> = vec![];
        let no_labels: Vec<BTreeSet<u8>> = vec![];
        assert!(knn_predict_multilabel(&empty, &no_labels, &[vec![1.0]], 1).is_err());
        assert!(knn_predict_multilabel(&[vec![1.0]], &[BTreeSet::from([1u8])], &[vec![1.0]], 2).is_err());
    }
}
