//! Training batches: stratified or pooled sampling, hard-negative padding and
//! the in-batch candidate pool.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{PrefixKind, TrainingPair};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Dataset label written to the log for pooled batches.
pub const MIXED_DATASET: &str = "*";

/// One step's worth of texts. Column `pos_index[i]` of the score matrix is
/// query `i`'s positive; every other column is a negative for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub dataset: String,
    pub queries: Vec<(String, PrefixKind)>,
    pub documents: Vec<(String, PrefixKind)>,
    pub pos_index: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOptions {
    pub batch_size: usize,
    pub n_hard: usize,
    pub stratified: bool,
    pub prefixes_enabled: bool,
}

struct Group {
    id: String,
    pairs: Vec<TrainingPair>,
    /// Distinct documents of the dataset, in first-seen order.
    docs: Vec<String>,
}

/// Endless, seeded source of batches.
pub struct BatchSampler {
    groups: Vec<Group>,
    total: usize,
    opts: BatchOptions,
    rng: ChaCha8Rng,
}

/// Groups `pairs` by dataset and returns a sampler seeded from `seed`.
pub fn build_batches(pairs: &[TrainingPair], opts: BatchOptions, seed: u64) -> Result<BatchSampler> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no training pairs".into()));
    }
    if opts.batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be at least 1".into()));
    }
    let mut by_id: BTreeMap<&str, Vec<TrainingPair>> = BTreeMap::new();
    for p in pairs {
        p.validate()?;
        by_id.entry(&p.dataset_id).or_default().push(p.clone());
    }
    let groups = by_id
        .into_iter()
        .map(|(id, pairs)| {
            let mut seen = BTreeSet::new();
            let docs = pairs
                .iter()
                .flat_map(|p| std::iter::once(&p.positive).chain(&p.hard_negatives))
                .filter(|d| seen.insert(d.as_str()))
                .cloned()
                .collect();
            Group {
                id: id.to_string(),
                pairs,
                docs,
            }
        })
        .collect();
    Ok(BatchSampler {
        groups,
        total: pairs.len(),
        opts,
        rng: stream_rng(seed, 0),
    })
}

impl BatchSampler {
    /// Pair counts per dataset id.
    pub fn dataset_sizes(&self) -> Vec<(&str, usize)> {
        self.groups.iter().map(|g| (g.id.as_str(), g.pairs.len())).collect()
    }

    fn pick_group(&mut self) -> usize {
        let mut u = self.rng.random_range(0..self.total);
        for (i, g) in self.groups.iter().enumerate() {
            if u < g.pairs.len() {
                return i;
            }
            u -= g.pairs.len();
        }
        unreachable!("u < total")
    }

    fn sorted_sample(&mut self, len: usize, n: usize) -> Vec<usize> {
        let mut v = sample(&mut self.rng, len, n.min(len)).into_vec();
        v.sort_unstable();
        v
    }

    /// `n_hard` negatives for `pair`: its own first, then padding drawn from
    /// the dataset's other documents.
    fn negatives(&mut self, g: usize, pair: &TrainingPair) -> Vec<String> {
        let n = self.opts.n_hard;
        let mut negs: Vec<String> = pair.hard_negatives.iter().take(n).cloned().collect();
        if negs.len() == n {
            return negs;
        }
        let need = n - negs.len();
        let pool: Vec<&String> = self.groups[g]
            .docs
            .iter()
            .filter(|d| **d != pair.positive && !negs.contains(d))
            .collect();
        if pool.is_empty() {
            log::warn!(
                "dataset {}: no documents to pad hard negatives of `{}`",
                self.groups[g].id,
                pair.query
            );
            return negs;
        }
        let picks: Vec<usize> = if pool.len() >= need {
            sample(&mut self.rng, pool.len(), need).into_vec()
        } else {
            (0..need).map(|_| self.rng.random_range(0..pool.len())).collect()
        };
        negs.extend(picks.into_iter().map(|i| pool[i].clone()));
        negs
    }

    pub fn next_batch(&mut self) -> Batch {
        let b = self.opts.batch_size;
        let chosen: Vec<(usize, usize)> = if self.opts.stratified || self.groups.len() == 1 {
            let g = self.pick_group();
            let len = self.groups[g].pairs.len();
            self.sorted_sample(len, b).into_iter().map(|i| (g, i)).collect()
        } else {
            let flat: Vec<(usize, usize)> = self
                .groups
                .iter()
                .enumerate()
                .flat_map(|(g, grp)| (0..grp.pairs.len()).map(move |i| (g, i)))
                .collect();
            self.sorted_sample(flat.len(), b).into_iter().map(|i| flat[i]).collect()
        };
        let single = chosen.iter().all(|c| c.0 == chosen[0].0);
        // Pooled batches condition queries only.
        let doc_prefixes = self.opts.stratified || single;
        let mut batch = Batch {
            dataset: if single {
                self.groups[chosen[0].0].id.clone()
            } else {
                MIXED_DATASET.to_string()
            },
            queries: Vec::with_capacity(chosen.len()),
            documents: Vec::new(),
            pos_index: Vec::with_capacity(chosen.len()),
        };
        let on = self.opts.prefixes_enabled;
        for (g, i) in chosen {
            let pair = self.groups[g].pairs[i].clone();
            let dp = if doc_prefixes {
                pair.document_prefix.if_enabled(on)
            } else {
                PrefixKind::None
            };
            batch
                .queries
                .push((pair.query.clone(), pair.query_prefix.if_enabled(on)));
            batch.pos_index.push(batch.documents.len());
            batch.documents.push((pair.positive.clone(), dp));
            for neg in self.negatives(g, &pair) {
                batch.documents.push((neg, dp));
            }
        }
        batch
    }
}

impl Iterator for BatchSampler {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        Some(self.next_batch())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PairRole;

    fn pairs(id: &str, n: usize, negs: usize) -> Vec<TrainingPair> {
        (0..n)
            .map(|i| {
                TrainingPair::new(
                    id,
                    &format!("{id} q{i}"),
                    &format!("{id} d{i}"),
                    (0..negs).map(|j| format!("{id} n{i}-{j}")),
                    PairRole::Retrieval,
                )
                .unwrap()
            })
            .collect()
    }

    fn opts(b: usize, n: usize, stratified: bool) -> BatchOptions {
        BatchOptions {
            batch_size: b,
            n_hard: n,
            stratified,
            prefixes_enabled: true,
        }
    }

    #[test]
    fn pool_size_for_full_scale_batch() {
        let p = pairs("a", 200, 7);
        let mut s = build_batches(&p, opts(128, 7, true), 0).unwrap();
        let b = s.next_batch();
        assert_eq!(b.queries.len(), 128);
        assert_eq!(b.documents.len(), 1024);
        assert_eq!(b.pos_index[3], 3 * 8);
    }

    #[test]
    fn padding_comes_from_the_same_dataset() {
        let mut p = pairs("a", 10, 2);
        p.extend(pairs("b", 10, 7));
        let mut s = build_batches(&p, opts(4, 7, true), 1).unwrap();
        for _ in 0..50 {
            let b = s.next_batch();
            assert_eq!(b.documents.len(), 4 * 8);
            assert!(b.documents.iter().all(|(d, _)| d.starts_with(&b.dataset)));
            assert!(b.queries.iter().all(|(q, _)| q.starts_with(&b.dataset)));
            for (i, &p) in b.pos_index.iter().enumerate() {
                let pos = &b.documents[p].0;
                let negs = &b.documents[p + 1..p + 8];
                assert!(negs.iter().all(|(n, _)| n != pos), "batch query {i}");
            }
        }
    }

    #[test]
    fn single_dataset_modes_coincide() {
        let p = pairs("only", 30, 7);
        let a: Vec<Batch> = build_batches(&p, opts(8, 7, true), 3).unwrap().take(5).collect();
        let b: Vec<Batch> = build_batches(&p, opts(8, 7, false), 3).unwrap().take(5).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn pooled_batches_prefix_queries_only() {
        let mut p = pairs("a", 20, 7);
        p.extend(pairs("b", 20, 7));
        let mut s = build_batches(&p, opts(16, 7, false), 4).unwrap();
        let b = s.next_batch();
        assert_eq!(b.dataset, MIXED_DATASET);
        assert!(b.queries.iter().all(|(_, p)| *p == PrefixKind::SearchQuery));
        assert!(b.documents.iter().all(|(_, p)| *p == PrefixKind::None));
    }

    #[test]
    fn proportional_selection() {
        let mut p = pairs("big", 90, 1);
        p.extend(pairs("small", 10, 1));
        let mut s = build_batches(&p, opts(4, 1, true), 0).unwrap();
        let big = (0..1000).filter(|_| s.next_batch().dataset == "big").count();
        // Binomial(1000, 0.9): mean 900, sd ~9.5.
        assert!((big as f64 - 900.0).abs() <= 3.0 * (1000.0f64 * 0.9 * 0.1).sqrt());
        assert_eq!(big, 893);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(build_batches(&[], opts(4, 7, true), 0).is_err());
    }
}
