//! The seven evaluation protocols and the suite runner.

mod protocols;
mod suite;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use protocols::{
    eval_classification, eval_clustering, eval_multilabel, eval_pair_classification, eval_reranking, eval_retrieval,
    eval_sts, evaluate_task,
};
pub use suite::{load_suite, run_benchmark, SuiteEntry, SuiteTask};

use crate::data::PrefixKind;
use crate::embed::{Embedder, EmbeddingMatrix, Pooling};
use crate::error::{Error, Result};
use crate::metrics::Gain;

/// How the classification bootstrap draws its training subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    /// `n` examples of every label.
    #[default]
    PerLabel,
    /// `n` examples in total.
    Total,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub runs: usize,
    pub samples_per_label: usize,
    pub sample_mode: SampleMode,
    pub knn_k: usize,
    pub kmeans_subset: usize,
    pub map_k: usize,
    pub ndcg_k: usize,
    /// Documents retrieved per query before scoring.
    pub retrieval_depth: usize,
    pub gain: Gain,
    pub base_seed: u64,
    pub pooling: Pooling,
    pub prefixes_enabled: bool,
    /// Run bootstrap iterations on the rayon pool. Scores do not depend on it.
    #[serde(skip)]
    pub parallel: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            runs: 10,
            samples_per_label: 8,
            sample_mode: SampleMode::PerLabel,
            knn_k: 5,
            kmeans_subset: 2048,
            map_k: 10,
            ndcg_k: 10,
            retrieval_depth: 100,
            gain: Gain::Linear,
            base_seed: 0,
            pooling: Pooling::Cls,
            prefixes_enabled: true,
            parallel: false,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("runs", self.runs),
            ("samples_per_label", self.samples_per_label),
            ("knn_k", self.knn_k),
            ("kmeans_subset", self.kmeans_subset),
            ("map_k", self.map_k),
            ("ndcg_k", self.ndcg_k),
            ("retrieval_depth", self.retrieval_depth),
        ];
        for (name, v) in checks {
            if v == 0 {
                return Err(Error::InvalidInput(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    pub(crate) fn prefix(&self, p: PrefixKind) -> PrefixKind {
        p.if_enabled(self.prefixes_enabled)
    }

    pub(crate) fn map_runs<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync + Send,
    {
        let runs = self.runs as u64;
        if self.parallel {
            (0..runs).into_par_iter().map(f).collect()
        } else {
            (0..runs).map(f).collect()
        }
    }
}

/// Score of one task. `runs` holds per-run scores for bootstrap protocols.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskScore {
    pub score: f64,
    pub runs: Vec<f64>,
    pub aux: BTreeMap<String, f64>,
}

impl TaskScore {
    pub(crate) fn single(score: f64) -> Self {
        Self {
            score,
            ..Default::default()
        }
    }

    pub(crate) fn from_runs(runs: Vec<f64>) -> Self {
        Self {
            score: mean(&runs),
            runs,
            aux: BTreeMap::new(),
        }
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Embeddings of a set of distinct texts, each embedded once.
pub(crate) struct Embedded {
    matrix: EmbeddingMatrix,
    index: HashMap<String, usize>,
}

impl Embedded {
    pub(crate) fn new<'a, I>(embedder: &dyn Embedder, texts: I, prefix: PrefixKind) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut index = HashMap::new();
        let mut unique = Vec::new();
        for t in texts {
            if !index.contains_key(t) {
                index.insert(t.to_owned(), unique.len());
                unique.push(t.to_owned());
            }
        }
        let matrix = if unique.is_empty() {
            EmbeddingMatrix::from_normalized(0, 0, Vec::new())?
        } else {
            embedder.embed(&unique, prefix)?
        };
        if matrix.rows() != unique.len() {
            return Err(Error::Shape(format!(
                "embedder returned {} rows for {} texts",
                matrix.rows(),
                unique.len()
            )));
        }
        Ok(Self { matrix, index })
    }

    pub(crate) fn row(&self, text: &str) -> &[f64] {
        self.matrix.row(self.index[text])
    }

    pub(crate) fn rows<'a, I: IntoIterator<Item = &'a str>>(&self, texts: I) -> Vec<Vec<f64>> {
        texts.into_iter().map(|t| self.row(t).to_vec()).collect()
    }

    pub(crate) fn matrix_of<'a, I: IntoIterator<Item = &'a str>>(&self, texts: I) -> EmbeddingMatrix {
        let idx: Vec<usize> = texts.into_iter().map(|t| self.index[t]).collect();
        self.matrix.select(&idx)
    }
}
