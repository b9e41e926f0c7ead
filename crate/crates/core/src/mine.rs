//! Hard-negative mining by rank window.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data::{CorpusDoc, PrefixKind};
use crate::embed::{dot, Embedder};
use crate::error::{Error, Result};
use crate::metrics::Ranking;
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningConfig {
    /// First eligible rank, 1-based, counted after removing positives.
    pub rank_lo: usize,
    /// Last eligible rank, inclusive.
    pub rank_hi: usize,
    pub n_neg: usize,
    pub seed: u64,
    pub prefixes_enabled: bool,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            rank_lo: 20,
            rank_hi: 100,
            n_neg: 7,
            seed: 0,
            prefixes_enabled: true,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank_lo == 0 || self.rank_lo > self.rank_hi {
            return Err(Error::InvalidInput(format!(
                "rank window [{}, {}] must satisfy 1 <= lo <= hi",
                self.rank_lo, self.rank_hi
            )));
        }
        if self.n_neg == 0 {
            return Err(Error::InvalidInput("n_neg must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiningQuery {
    pub query_id: String,
    pub text: String,
    /// Corpus ids known to be relevant; never returned as negatives.
    pub positives: Vec<String>,
}

/// One output line: negatives ordered by rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinedNegatives {
    pub query_id: String,
    pub negatives: Vec<String>,
    pub ranks: Vec<usize>,
    pub seed: u64,
}

/// Picks negatives for one query from its positive-free ranking
/// (`ranked[r - 1]` holds rank `r`). Returns 1-based ranks in ascending order.
pub fn pick_ranks(ranked_len: usize, cfg: &MiningConfig, query_index: u64) -> Result<Vec<usize>> {
    if ranked_len < cfg.rank_lo + 1 {
        return Err(Error::InvalidInput(format!(
            "{ranked_len} candidate documents after removing positives; need at least {}",
            cfg.rank_lo + 1
        )));
    }
    let mut rng = stream_rng(cfg.seed, query_index);
    let hi = cfg.rank_hi.min(ranked_len);
    let window = hi - cfg.rank_lo + 1;
    let mut ranks: Vec<usize> = if window >= cfg.n_neg {
        sample(&mut rng, window, cfg.n_neg)
            .into_iter()
            .map(|i| cfg.rank_lo + i)
            .collect()
    } else {
        let mut all: Vec<usize> = (cfg.rank_lo..=hi).collect();
        let below = ranked_len - hi;
        let extra = (cfg.n_neg - window).min(below);
        all.extend(sample(&mut rng, below, extra).into_iter().map(|i| hi + 1 + i));
        if all.len() < cfg.n_neg {
            log::warn!("only {} negatives available for query {query_index}", all.len());
        }
        all
    };
    ranks.sort_unstable();
    Ok(ranks)
}

/// Embeds the corpus once, ranks it for every query and samples negatives
/// from the configured rank window.
pub fn mine_hard_negatives(
    queries: &[MiningQuery],
    corpus: &[CorpusDoc],
    embedder: &dyn Embedder,
    cfg: &MiningConfig,
) -> Result<Vec<MinedNegatives>> {
    cfg.validate()?;
    if corpus.len() <= cfg.rank_lo {
        return Err(Error::InvalidInput(format!(
            "corpus of {} documents is too small for rank {}",
            corpus.len(),
            cfg.rank_lo
        )));
    }
    let doc_texts: Vec<String> = corpus.iter().map(CorpusDoc::full_text).collect();
    let docs = embedder.embed(&doc_texts, PrefixKind::SearchDocument.if_enabled(cfg.prefixes_enabled))?;
    let q_texts: Vec<String> = queries.iter().map(|q| q.text.clone()).collect();
    let qs = embedder.embed(&q_texts, PrefixKind::SearchQuery.if_enabled(cfg.prefixes_enabled))?;
    queries
        .iter()
        .enumerate()
        .map(|(qi, q)| {
            let known: BTreeSet<&str> = q.positives.iter().map(String::as_str).collect();
            let scores: Vec<f64> = (0..docs.rows()).map(|d| dot(qs.row(qi), docs.row(d))).collect();
            let ranked: Vec<usize> = Ranking::from_scores(&scores)
                .ids()
                .filter(|&d| !known.contains(corpus[d].id.as_str()))
                .collect();
            let ranks = pick_ranks(ranked.len(), cfg, qi as u64)
                .map_err(|e| Error::InvalidInput(format!("query `{}`: {e}", q.query_id)))?;
            Ok(MinedNegatives {
                query_id: q.query_id.clone(),
                negatives: ranks.iter().map(|&r| corpus[ranked[r - 1]].id.clone()).collect(),
                ranks,
                seed: cfg.seed,
            })
        })
        .collect()
}

pub fn write_mined(path: &Path, mined: &[MinedNegatives]) -> Result<()> {
    let mut out = Vec::new();
    for m in mined {
        serde_json::to_writer(&mut out, m)?;
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_sampling() {
        let cfg = MiningConfig::default();
        for q in 0..20 {
            let r = pick_ranks(150, &cfg, q).unwrap();
            assert_eq!(r.len(), 7);
            assert!(r.iter().all(|&x| (20..=100).contains(&x)));
            assert!(r.windows(2).all(|w| w[0] < w[1]));
        }
        assert!(pick_ranks(20, &cfg, 0).is_err());
        assert_eq!(pick_ranks(23, &cfg, 0).unwrap(), vec![20, 21, 22, 23]);
    }

    #[test]
    fn top_up_below_the_window() {
        let cfg = MiningConfig {
            rank_lo: 3,
            rank_hi: 5,
            n_neg: 5,
            ..Default::default()
        };
        let r = pick_ranks(30, &cfg, 1).unwrap();
        assert_eq!(&r[..3], &[3, 4, 5]);
        assert!(r[3..].iter().all(|&x| x > 5));
    }

    #[test]
    fn config_checks() {
        assert!(MiningConfig {
            rank_lo: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(MiningConfig {
            rank_lo: 50,
            rank_hi: 10,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
