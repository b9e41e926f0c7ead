//! Scoring functions. All are pure; ties are broken by ascending index or id
//! everywhere, so every value is deterministic.

mod binary;
mod cluster;
mod correlation;
mod ranking;

pub use binary::{accuracy, average_precision, best_threshold_metrics, ThresholdMetrics};
pub use cluster::{homogeneity_completeness_v, v_measure};
pub use correlation::{average_ranks, pearson, spearman};
pub use ranking::{cosine_topk, map_at_k, ndcg_at_k, Gain, Ranking};
