//! Seeded synthetic corpora and a seven-task suite built from them.
//!
//! Every cluster owns a private vocabulary; all texts also draw from one
//! shared vocabulary, so cluster identity is a weak lexical signal that an
//! encoder has to learn to amplify.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{
    ClassificationData, CorpusDoc, Label, LabeledText, MultiLabelData, MultiLabelText, PairRole, QrelLine, QueryRecord,
    RerankMetric, RerankQuery, RetrievalData, ScoredPair, Split, TaskDataset, TextPair, TrainingPair,
};
use crate::embed::Embedder;
use crate::error::{Error, Result};
use crate::eval::SuiteEntry;
use crate::mine::{mine_hard_negatives, MiningConfig, MiningQuery};
use crate::rng::stream_rng;

/// Shape of a clustered corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub n_clusters: usize,
    pub n_docs: usize,
    pub n_queries: usize,
    pub topic_words: usize,
    pub shared_words: usize,
    pub doc_len: usize,
    pub query_len: usize,
    /// Probability that a token comes from the cluster vocabulary.
    pub topic_rate: f64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        Self {
            n_clusters: 8,
            n_docs: 256,
            n_queries: 64,
            topic_words: 24,
            shared_words: 64,
            doc_len: 12,
            query_len: 6,
            topic_rate: 0.3,
        }
    }
}

impl ClusterSpec {
    /// The 120-document corpus used to check mining.
    pub fn mining_fixture() -> Self {
        Self {
            n_clusters: 4,
            n_docs: 120,
            n_queries: 12,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_clusters < 2 || self.n_docs < self.n_clusters || self.n_queries == 0 {
            return Err(Error::InvalidInput(format!(
                "cluster spec needs >= 2 clusters, >= 1 doc per cluster and >= 1 query: {self:?}"
            )));
        }
        if self.topic_words == 0 || self.shared_words == 0 || self.doc_len == 0 || self.query_len == 0 {
            return Err(Error::InvalidInput(
                "vocabulary sizes and text lengths must be >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.topic_rate) {
            return Err(Error::InvalidInput(format!(
                "topic_rate {} outside [0, 1]",
                self.topic_rate
            )));
        }
        Ok(())
    }
}

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ren", "su", "ta", "vel", "zor", "an", "bri", "do", "fen", "gu", "hal", "ix", "jo",
];

fn word(tag: usize, j: usize) -> String {
    let mut w = String::new();
    for x in [tag, j / 16, j % 16] {
        w.push_str(SYLLABLES[x % 16]);
    }
    w.push_str(&tag.to_string());
    w
}

/// Text generator over cluster and shared vocabularies.
#[derive(Debug, Clone)]
pub struct Vocab {
    topics: Vec<Vec<String>>,
    shared: Vec<String>,
    topic_rate: f64,
}

impl Vocab {
    pub fn new(spec: &ClusterSpec) -> Self {
        let topics = (0..spec.n_clusters)
            .map(|k| (0..spec.topic_words).map(|j| word(k + 1, j)).collect())
            .collect();
        let shared = (0..spec.shared_words).map(|j| word(0, j)).collect();
        Self {
            topics,
            shared,
            topic_rate: spec.topic_rate,
        }
    }

    /// `len` tokens, each from one of `clusters` (uniformly) with probability
    /// `topic_rate`, otherwise from the shared vocabulary.
    pub fn text(&self, rng: &mut ChaCha8Rng, clusters: &[usize], len: usize) -> String {
        let words: Vec<&str> = (0..len)
            .map(|_| {
                if !clusters.is_empty() && rng.random::<f64>() < self.topic_rate {
                    let c = clusters[rng.random_range(0..clusters.len())];
                    let v = &self.topics[c];
                    v[rng.random_range(0..v.len())].as_str()
                } else {
                    self.shared[rng.random_range(0..self.shared.len())].as_str()
                }
            })
            .collect();
        words.join(" ")
    }
}

/// A retrieval corpus where every query is relevant to all documents of its
/// cluster. Documents and queries are assigned to clusters round-robin.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterCorpus {
    pub data: RetrievalData,
    pub doc_cluster: Vec<usize>,
    pub query_cluster: Vec<usize>,
}

impl ClusterCorpus {
    pub fn generate(spec: &ClusterSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let vocab = Vocab::new(spec);
        let mut rng = stream_rng(seed, 0);
        let doc_cluster: Vec<usize> = (0..spec.n_docs).map(|i| i % spec.n_clusters).collect();
        let corpus = doc_cluster
            .iter()
            .enumerate()
            .map(|(i, &c)| CorpusDoc {
                id: format!("d{i}"),
                title: None,
                text: vocab.text(&mut rng, &[c], spec.doc_len),
            })
            .collect();
        let mut rng = stream_rng(seed, 1);
        let query_cluster: Vec<usize> = (0..spec.n_queries).map(|i| i % spec.n_clusters).collect();
        let queries = query_cluster
            .iter()
            .enumerate()
            .map(|(i, &c)| QueryRecord {
                id: format!("q{i}"),
                text: vocab.text(&mut rng, &[c], spec.query_len),
            })
            .collect();
        let qrels = query_cluster
            .iter()
            .enumerate()
            .flat_map(|(qi, &qc)| {
                doc_cluster
                    .iter()
                    .enumerate()
                    .filter(move |&(_, &dc)| dc == qc)
                    .map(move |(di, _)| QrelLine {
                        query_id: format!("q{qi}"),
                        doc_id: format!("d{di}"),
                        grade: 1,
                    })
            })
            .collect();
        Ok(Self {
            data: RetrievalData { corpus, queries, qrels },
            doc_cluster,
            query_cluster,
        })
    }

    pub fn cluster_doc_ids(&self, cluster: usize) -> Vec<String> {
        self.doc_cluster
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == cluster)
            .map(|(i, _)| self.data.corpus[i].id.clone())
            .collect()
    }

    /// The evaluation queries with every same-cluster document as a known
    /// positive.
    pub fn mining_queries(&self) -> Vec<MiningQuery> {
        self.data
            .queries
            .iter()
            .zip(&self.query_cluster)
            .map(|(q, &c)| MiningQuery {
                query_id: q.id.clone(),
                text: q.text.clone(),
                positives: self.cluster_doc_ids(c),
            })
            .collect()
    }

    /// Fresh training queries, disjoint in sampling stream from the
    /// evaluation queries, each paired with one random same-cluster document.
    /// Returned with the mining queries used to attach hard negatives.
    pub fn training_queries(&self, spec: &ClusterSpec, n: usize, seed: u64) -> (Vec<MiningQuery>, Vec<String>) {
        let vocab = Vocab::new(spec);
        let mut rng = stream_rng(seed, 2);
        let mut queries = Vec::with_capacity(n);
        let mut positives = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % spec.n_clusters;
            let ids = self.cluster_doc_ids(c);
            let pos = &ids[rng.random_range(0..ids.len())];
            positives.push(self.doc_text(pos).to_string());
            queries.push(MiningQuery {
                query_id: format!("t{i}"),
                text: vocab.text(&mut rng, &[c], spec.query_len),
                positives: ids,
            });
        }
        (queries, positives)
    }

    pub fn doc_text(&self, id: &str) -> &str {
        self.data
            .corpus
            .iter()
            .find(|d| d.id == id)
            .map(|d| d.text.as_str())
            .unwrap_or_default()
    }

    /// Assembles training pairs from queries, their positives and mined
    /// negative ids.
    pub fn assemble_pairs(
        &self,
        dataset_id: &str,
        queries: &[MiningQuery],
        positives: &[String],
        negatives: &[Vec<String>],
    ) -> Result<Vec<TrainingPair>> {
        queries
            .iter()
            .zip(positives)
            .zip(negatives)
            .map(|((q, p), negs)| {
                TrainingPair::new(
                    dataset_id,
                    &q.text,
                    p,
                    negs.iter().map(|id| self.doc_text(id).to_string()),
                    PairRole::Retrieval,
                )
            })
            .collect()
    }
}

/// Training pairs for `corpus`: fresh cluster queries, one random positive
/// each, and hard negatives mined with `embedder`.
pub fn cluster_training_pairs(
    corpus: &ClusterCorpus,
    spec: &ClusterSpec,
    n_pairs: usize,
    seed: u64,
    embedder: &dyn Embedder,
    mining: &MiningConfig,
) -> Result<Vec<TrainingPair>> {
    let (queries, positives) = corpus.training_queries(spec, n_pairs, seed);
    let mined = mine_hard_negatives(&queries, &corpus.data.corpus, embedder, mining)?;
    let negatives: Vec<Vec<String>> = mined.into_iter().map(|m| m.negatives).collect();
    corpus.assemble_pairs(CLUSTER_DATASET, &queries, &positives, &negatives)
}

/// Dataset id of pairs built by [`cluster_training_pairs`].
pub const CLUSTER_DATASET: &str = "synthetic-clusters";

/// One task of the synthetic suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTask {
    pub name: &'static str,
    pub category: &'static str,
    pub dataset: TaskDataset,
}

fn labeled(
    vocab: &Vocab,
    rng: &mut ChaCha8Rng,
    n_labels: usize,
    per_label: usize,
    split: Option<Split>,
) -> Vec<LabeledText> {
    (0..n_labels * per_label)
        .map(|i| {
            let c = i % n_labels;
            LabeledText {
                text: vocab.text(rng, &[c], 10),
                label: Label::Str(format!("topic{c}")),
                split,
            }
        })
        .collect()
}

/// Seven small seeded datasets, one per task kind, all drawn from a
/// four-cluster vocabulary.
pub fn synthetic_suite(seed: u64) -> Result<Vec<SynthTask>> {
    let spec = ClusterSpec {
        n_clusters: 4,
        ..ClusterSpec::default()
    };
    let vocab = Vocab::new(&spec);
    let k = spec.n_clusters;

    let mut rng = stream_rng(seed, 10);
    let mut records = labeled(&vocab, &mut rng, k, 16, Some(Split::Train));
    records.extend(labeled(&vocab, &mut rng, k, 10, Some(Split::Test)));
    let classification = TaskDataset::Classification(ClassificationData { records });

    let mut rng = stream_rng(seed, 11);
    let pairs = (0..48)
        .map(|i| {
            let a = rng.random_range(0..k);
            let b = if i % 2 == 0 {
                a
            } else {
                (a + 1 + rng.random_range(0..k - 1)) % k
            };
            TextPair {
                sentence1: vocab.text(&mut rng, &[a], 10),
                sentence2: vocab.text(&mut rng, &[b], 10),
                label: u8::from(a == b),
            }
        })
        .collect();
    let pair_classification = TaskDataset::PairClassification(pairs);

    let mut rng = stream_rng(seed, 12);
    let mut ml = Vec::new();
    for (split, n) in [(Split::Train, 64), (Split::Test, 24)] {
        for i in 0..n {
            let mut set = BTreeSet::from([i % k]);
            if rng.random::<f64>() < 0.5 {
                set.insert(rng.random_range(0..k));
            }
            let clusters: Vec<usize> = set.into_iter().collect();
            ml.push(MultiLabelText {
                text: vocab.text(&mut rng, &clusters, 12),
                labels: clusters.iter().map(|c| Label::Str(format!("topic{c}"))).collect(),
                split: Some(split),
            });
        }
    }
    let multilabel = TaskDataset::MultiLabel(MultiLabelData { records: ml });

    let mut rng = stream_rng(seed, 13);
    let clustering = TaskDataset::Clustering(labeled(&vocab, &mut rng, k, 15, None));

    let mut rng = stream_rng(seed, 14);
    let sts = (0..40)
        .map(|_| {
            let a = rng.random_range(0..k);
            let b = rng.random_range(0..k);
            let shared = rng.random_range(0..=4usize);
            let s1 = vocab.text(&mut rng, &[a], 8);
            let common: Vec<&str> = s1.split(' ').take(shared).collect();
            let rest = vocab.text(&mut rng, &[b], 8 - shared);
            let s2 = if common.is_empty() {
                rest
            } else {
                format!("{} {rest}", common.join(" "))
            };
            let score = (shared as f64 + if a == b { 1.0 } else { 0.0 }) / 5.0;
            ScoredPair {
                sentence1: s1,
                sentence2: s2,
                score,
            }
        })
        .collect();
    let sts = TaskDataset::Sts(sts);

    let mut rng = stream_rng(seed, 15);
    let rerank = (0..16)
        .map(|i| {
            let c = i % k;
            let other = |rng: &mut ChaCha8Rng| (c + 1 + rng.random_range(0..k - 1)) % k;
            RerankQuery {
                query: vocab.text(&mut rng, &[c], 6),
                positive: (0..2).map(|_| vocab.text(&mut rng, &[c], 10)).collect(),
                negative: (0..8)
                    .map(|_| {
                        let o = other(&mut rng);
                        vocab.text(&mut rng, &[o], 10)
                    })
                    .collect(),
            }
        })
        .collect();
    let reranking = TaskDataset::Reranking {
        queries: rerank,
        metric: RerankMetric::MapAt10,
    };

    let retrieval_spec = ClusterSpec {
        n_clusters: k,
        n_docs: 64,
        n_queries: 16,
        ..spec
    };
    let retrieval = TaskDataset::Retrieval(ClusterCorpus::generate(&retrieval_spec, seed ^ 0x5eed)?.data);

    let tasks = vec![
        ("SynthClassification", "Classification", classification),
        ("SynthPairClassification", "PairClassification", pair_classification),
        ("SynthMultiLabel", "MultiLabelClassification", multilabel),
        ("SynthClustering", "Clustering", clustering),
        ("SynthSTS", "STS", sts),
        ("SynthReranking", "Reranking", reranking),
        ("SynthRetrieval", "Retrieval", retrieval),
    ];
    tasks
        .into_iter()
        .map(|(name, category, dataset)| {
            dataset.validate()?;
            Ok(SynthTask {
                name,
                category,
                dataset,
            })
        })
        .collect()
}

/// Writes the synthetic suite under `dir` and returns the manifest path.
pub fn write_synthetic_suite(dir: &Path, seed: u64) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for t in synthetic_suite(seed)? {
        let path = match &t.dataset {
            TaskDataset::Retrieval(r) => {
                let rel = t.name.to_lowercase();
                r.write_dir(&dir.join(&rel))?;
                rel
            }
            ds => {
                let rel = format!("{}.jsonl", t.name.to_lowercase());
                let p = dir.join(&rel);
                fs::write(&p, ds.to_jsonl()?).map_err(|e| Error::io(&p, e))?;
                rel
            }
        };
        let metric = match &t.dataset {
            TaskDataset::Reranking { metric, .. } => Some(metric.to_string()),
            _ => None,
        };
        entries.push(SuiteEntry {
            name: t.name.to_string(),
            category: t.category.to_string(),
            kind: t.dataset.kind().to_string(),
            path,
            metric,
        });
    }
    let manifest = dir.join("suite.json");
    let body = serde_json::to_string_pretty(&entries)? + "\n";
    fs::write(&manifest, body).map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}
