use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binary::desc_then_index;
use crate::embed::{dot, EmbeddingMatrix};
use crate::error::{Error, Result};

/// Items sorted by non-increasing score, ties by ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    items: Vec<(usize, f64)>,
}

impl Ranking {
    /// Sorts `(id, score)` pairs into ranking order. Ids must be unique.
    pub fn from_pairs(mut items: Vec<(usize, f64)>) -> Result<Self> {
        let unique: BTreeSet<usize> = items.iter().map(|(i, _)| *i).collect();
        if unique.len() != items.len() {
            return Err(Error::InvalidInput("ranking ids must be unique".into()));
        }
        items.sort_by(|a, b| desc_then_index(a.1, a.0, b.1, b.0));
        Ok(Self { items })
    }

    /// Ranks ids `0..scores.len()` by their score.
    pub fn from_scores(scores: &[f64]) -> Self {
        let mut items: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
        items.sort_by(|a, b| desc_then_index(a.1, a.0, b.1, b.0));
        Self { items }
    }

    pub fn items(&self) -> &[(usize, f64)] {
        &self.items
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.items.iter().map(|(i, _)| *i)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Gain applied to a relevance grade in DCG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// `gain(g) = g`
    #[default]
    Linear,
    /// `gain(g) = 2^g - 1`
    Exponential,
}

impl Gain {
    fn apply(self, grade: u32) -> f64 {
        match self {
            Gain::Linear => f64::from(grade),
            Gain::Exponential => 2f64.powi(grade as i32) - 1.0,
        }
    }
}

fn average_precision_at_k(ranking: &Ranking, relevant: &BTreeSet<usize>, k: usize) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, id) in ranking.ids().take(k).enumerate() {
        if relevant.contains(&id) {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    sum / relevant.len().min(k) as f64
}

/// Mean over queries of AP@k, normalized by `min(|relevant|, k)`.
pub fn map_at_k(rankings: &[Ranking], relevant: &[BTreeSet<usize>], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if rankings.len() != relevant.len() {
        return Err(Error::Shape(format!(
            "{} rankings vs {} relevance sets",
            rankings.len(),
            relevant.len()
        )));
    }
    if rankings.is_empty() {
        return Err(Error::InvalidInput("MAP over zero queries".into()));
    }
    let mut total = 0.0;
    for (q, (ranking, rel)) in rankings.iter().zip(relevant).enumerate() {
        if rel.is_empty() {
            return Err(Error::InvalidInput(format!("query {q} has no relevant items")));
        }
        total += average_precision_at_k(ranking, rel, k);
    }
    Ok(total / rankings.len() as f64)
}

/// nDCG@k of one ranking against graded judgments; unjudged items have grade 0.
pub fn ndcg_at_k(ranking: &Ranking, qrels: &BTreeMap<usize, u32>, k: usize, gain: Gain) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if qrels.values().all(|&g| g == 0) {
        return Err(Error::InvalidInput("nDCG needs at least one graded item".into()));
    }
    let discount = |r: usize| ((r + 2) as f64).log2();
    let dcg: f64 = ranking
        .ids()
        .take(k)
        .enumerate()
        .map(|(r, id)| gain.apply(qrels.get(&id).copied().unwrap_or(0)) / discount(r))
        .sum();
    let mut ideal: Vec<u32> = qrels.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(r, &g)| gain.apply(g) / discount(r))
        .sum();
    Ok((dcg / idcg).clamp(0.0, 1.0))
}

/// Exact top-`k` documents per query by dot product of unit rows.
pub fn cosine_topk(queries: &EmbeddingMatrix, docs: &EmbeddingMatrix, k: usize) -> Result<Vec<Ranking>> {
    if queries.dim() != docs.dim() {
        return Err(Error::Shape(format!(
            "query dim {} vs document dim {}",
            queries.dim(),
            docs.dim()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let keep = k.min(docs.rows());
    Ok((0..queries.rows())
        .into_par_iter()
        .map(|q| {
            let qv = queries.row(q);
            let mut scored: Vec<(usize, f64)> = (0..docs.rows()).map(|d| (d, dot(qv, docs.row(d)))).collect();
            let cmp = |a: &(usize, f64), b: &(usize, f64)| desc_then_index(a.1, a.0, b.1, b.0);
            if keep < scored.len() {
                scored.select_nth_unstable_by(keep - 1, cmp);
                scored.truncate(keep);
            }
            scored.sort_by(cmp);
            Ranking { items: scored }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn map_cases() {
        let r = Ranking::from_scores(&[0.9, 0.8, 0.7]);
        assert_eq!(map_at_k(&[r.clone()], &[set(&[0])], 10).unwrap(), 1.0);
        assert_eq!(map_at_k(&[r.clone()], &[set(&[1])], 10).unwrap(), 0.5);
        assert!(map_at_k(&[r], &[set(&[])], 10).is_err());
    }

    #[test]
    fn map_two_queries_by_enumeration() {
        // q0: relevant {1, 2} in ranking [0, 1, 2] -> (1/2 + 2/3) / 2
        // q1: relevant {0} in ranking [2, 1, 0] -> (1/3) / 1
        let r0 = Ranking::from_scores(&[0.9, 0.5, 0.1]);
        let r1 = Ranking::from_scores(&[0.1, 0.5, 0.9]);
        let got = map_at_k(&[r0, r1], &[set(&[1, 2]), set(&[0])], 10).unwrap();
        let want = ((0.5 + 2.0 / 3.0) / 2.0 + 1.0 / 3.0) / 2.0;
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn map_truncates_at_k() {
        // Relevant item at rank 3, k = 2 -> 0.
        let r = Ranking::from_scores(&[0.9, 0.8, 0.7]);
        assert_eq!(map_at_k(&[r], &[set(&[2])], 2).unwrap(), 0.0);
    }

    #[test]
    fn ndcg_cases() {
        let qrels: BTreeMap<usize, u32> = [(0, 3), (1, 1)].into_iter().collect();
        let ideal = Ranking::from_scores(&[0.9, 0.5]);
        assert_eq!(ndcg_at_k(&ideal, &qrels, 10, Gain::Linear).unwrap(), 1.0);
        let swapped = Ranking::from_scores(&[0.5, 0.9]);
        let got = ndcg_at_k(&swapped, &qrels, 10, Gain::Linear).unwrap();
        let want = (1.0 / 2f64.log2() + 3.0 / 3f64.log2()) / (3.0 / 2f64.log2() + 1.0 / 3f64.log2());
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.7967075809905066).abs() < 1e-15);
        let unjudged = Ranking::from_scores(&[0.0, 0.0, 0.9, 0.8]);
        assert_eq!(ndcg_at_k(&unjudged, &qrels, 2, Gain::Linear).unwrap(), 0.0);
        assert!(ndcg_at_k(&ideal, &BTreeMap::new(), 10, Gain::Linear).is_err());
    }

    #[test]
    fn ndcg_exponential_gain() {
        let qrels: BTreeMap<usize, u32> = [(0, 3), (1, 1)].into_iter().collect();
        let swapped = Ranking::from_scores(&[0.5, 0.9]);
        let got = ndcg_at_k(&swapped, &qrels, 10, Gain::Exponential).unwrap();
        let want = (1.0 + 7.0 / 3f64.log2()) / (7.0 + 1.0 / 3f64.log2());
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn topk_basics() {
        let docs = EmbeddingMatrix::normalize_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let q = EmbeddingMatrix::normalize_rows(vec![vec![0.0, 1.0]]).unwrap();
        let r = cosine_topk(&q, &docs, 10).unwrap();
        assert_eq!(r[0].len(), 3);
        assert_eq!(r[0].items()[0].0, 1);
        assert!((r[0].items()[0].1 - 1.0).abs() < 1e-9);
        let r = cosine_topk(&q, &docs, 1).unwrap();
        assert_eq!(r[0].ids().collect::<Vec<_>>(), vec![1]);
        let bad = EmbeddingMatrix::normalize_rows(vec![vec![1.0]]).unwrap();
        assert!(cosine_topk(&bad, &docs, 1).is_err());
    }

    #[test]
    fn topk_ties_by_index() {
        let docs = EmbeddingMatrix::normalize_rows(vec![vec![1.0, 0.0]; 4]).unwrap();
        let q = EmbeddingMatrix::normalize_rows(vec![vec![1.0, 0.0]]).unwrap();
        let r = cosine_topk(&q, &docs, 3).unwrap();
        assert_eq!(r[0].ids().collect::<Vec<_>>(), vec![0, 1, 2]);
    }
}
