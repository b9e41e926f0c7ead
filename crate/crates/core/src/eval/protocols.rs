use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{mean, Embedded, ProtocolConfig, SampleMode, TaskScore};
use crate::data::{
    ClassificationData, Label, LabeledText, MultiLabelData, PrefixKind, RerankMetric, RerankQuery, RetrievalData,
    ScoredPair, TaskDataset, TextPair,
};
use crate::embed::{dot, Embedder};
use crate::error::{Error, Result};
use crate::learn::{fit_logreg, kmeans, knn_predict_multilabel, KMeansOptions, LogRegOptions};
use crate::metrics::{
    accuracy, average_precision, best_threshold_metrics, cosine_topk, map_at_k, ndcg_at_k, spearman, v_measure, Gain,
    Ranking,
};
use crate::rng::stream_rng;

/// Runs the protocol matching the dataset's kind.
pub fn evaluate_task(ds: &TaskDataset, embedder: &dyn Embedder, cfg: &ProtocolConfig) -> Result<TaskScore> {
    cfg.validate()?;
    match ds {
        TaskDataset::Classification(d) => eval_classification(d, embedder, cfg),
        TaskDataset::PairClassification(d) => eval_pair_classification(d, embedder, cfg),
        TaskDataset::MultiLabel(d) => eval_multilabel(d, embedder, cfg),
        TaskDataset::Clustering(d) => eval_clustering(d, embedder, cfg),
        TaskDataset::Sts(d) => eval_sts(d, embedder, cfg),
        TaskDataset::Reranking { queries, metric } => eval_reranking(queries, *metric, embedder, cfg),
        TaskDataset::Retrieval(d) => eval_retrieval(d, embedder, cfg),
    }
}

/// Sorted draw of `min(n, len)` positions out of `0..len`.
fn draw(rng: &mut ChaCha8Rng, len: usize, n: usize) -> Vec<usize> {
    if n >= len {
        return (0..len).collect();
    }
    let mut v = sample(rng, len, n).into_vec();
    v.sort_unstable();
    v
}

fn cosines<'a>(emb: &Embedded, pairs: impl Iterator<Item = (&'a str, &'a str)>) -> Vec<f64> {
    pairs.map(|(a, b)| dot(emb.row(a), emb.row(b))).collect()
}

pub fn eval_classification(
    ds: &ClassificationData,
    embedder: &dyn Embedder,
    cfg: &ProtocolConfig,
) -> Result<TaskScore> {
    let train: Vec<&LabeledText> = ds.train().collect();
    let test: Vec<&LabeledText> = ds.test().collect();
    if test.is_empty() {
        return Err(Error::Invariant("classification test split is empty".into()));
    }
    let mut groups: BTreeMap<&Label, Vec<usize>> = BTreeMap::new();
    for (i, r) in train.iter().enumerate() {
        groups.entry(&r.label).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "classification needs at least 2 classes in train, found {}",
            groups.len()
        )));
    }
    if let Some(r) = test.iter().find(|r| !groups.contains_key(&r.label)) {
        return Err(Error::InvalidInput(format!(
            "test label {} never occurs in train",
            r.label
        )));
    }
    let emb = Embedded::new(
        embedder,
        train.iter().chain(&test).map(|r| r.text.as_str()),
        cfg.prefix(PrefixKind::Classification),
    )?;
    let train_x = emb.rows(train.iter().map(|r| r.text.as_str()));
    let test_x = emb.rows(test.iter().map(|r| r.text.as_str()));
    let gold: Vec<Label> = test.iter().map(|r| r.label.clone()).collect();
    let n = cfg.samples_per_label;

    let runs = cfg.map_runs(|run| {
        let mut rng = stream_rng(cfg.base_seed, run);
        let picked: Vec<usize> = match cfg.sample_mode {
            SampleMode::PerLabel => groups
                .values()
                .flat_map(|idx| {
                    draw(&mut rng, idx.len(), n)
                        .into_iter()
                        .map(|p| idx[p])
                        .collect::<Vec<_>>()
                })
                .collect(),
            SampleMode::Total => draw(&mut rng, train.len(), n),
        };
        let x: Vec<Vec<f64>> = picked.iter().map(|&i| train_x[i].clone()).collect();
        let y: Vec<&Label> = picked.iter().map(|&i| &train[i].label).collect();
        let model = fit_logreg(&x, &y, &LogRegOptions::default())?;
        let pred: Vec<Label> = model.predict(&test_x)?.into_iter().cloned().collect();
        accuracy(&pred, &gold)
    })?;
    Ok(TaskScore::from_runs(runs))
}

pub fn eval_pair_classification(ds: &[TextPair], embedder: &dyn Embedder, cfg: &ProtocolConfig) -> Result<TaskScore> {
    let labels: Vec<u8> = ds.iter().map(|p| p.label).collect();
    if !(labels.contains(&0) && labels.contains(&1)) {
        return Err(Error::InvalidInput(
            "pair classification needs both positive and negative pairs".into(),
        ));
    }
    let emb = Embedded::new(
        embedder,
        ds.iter().flat_map(|p| [p.sentence1.as_str(), p.sentence2.as_str()]),
        cfg.prefix(PrefixKind::Classification),
    )?;
    let sims = cosines(&emb, ds.iter().map(|p| (p.sentence1.as_str(), p.sentence2.as_str())));
    let ap = average_precision(&sims, &labels)?;
    let best = best_threshold_metrics(&sims, &labels)?;
    let mut score = TaskScore::single(ap);
    score.aux.insert("accuracy".into(), best.accuracy);
    score.aux.insert("f1".into(), best.f1);
    score.aux.insert("threshold".into(), best.threshold);
    Ok(score)
}

pub fn eval_multilabel(ds: &MultiLabelData, embedder: &dyn Embedder, cfg: &ProtocolConfig) -> Result<TaskScore> {
    let train: Vec<_> = ds.train().collect();
    let test: Vec<_> = ds.test().collect();
    if test.is_empty() {
        return Err(Error::Invariant("multilabel test split is empty".into()));
    }
    let universe: Vec<&Label> = ds.label_universe().into_iter().collect();
    if universe.len() < 2 {
        return Err(Error::InvalidInput(
            "multilabel needs at least 2 distinct labels".into(),
        ));
    }
    let mut by_label: BTreeMap<&Label, Vec<usize>> = BTreeMap::new();
    for (i, r) in train.iter().enumerate() {
        for l in r.labels.iter().collect::<BTreeSet<_>>() {
            by_label.entry(l).or_default().push(i);
        }
    }
    if by_label.is_empty() {
        return Err(Error::InvalidInput("multilabel train split carries no labels".into()));
    }
    let emb = Embedded::new(
        embedder,
        train.iter().chain(&test).map(|r| r.text.as_str()),
        cfg.prefix(PrefixKind::Classification),
    )?;
    let train_x = emb.rows(train.iter().map(|r| r.text.as_str()));
    let test_x = emb.rows(test.iter().map(|r| r.text.as_str()));
    let train_y: Vec<BTreeSet<Label>> = train.iter().map(|r| r.labels.iter().cloned().collect()).collect();
    let gold: Vec<BTreeSet<Label>> = test.iter().map(|r| r.labels.iter().cloned().collect()).collect();
    let n = cfg.samples_per_label;

    let runs = cfg.map_runs(|run| {
        let mut rng = stream_rng(cfg.base_seed, run);
        let mut picked = BTreeSet::new();
        for idx in by_label.values() {
            picked.extend(draw(&mut rng, idx.len(), n).into_iter().map(|p| idx[p]));
        }
        let x: Vec<Vec<f64>> = picked.iter().map(|&i| train_x[i].clone()).collect();
        let y: Vec<BTreeSet<Label>> = picked.iter().map(|&i| train_y[i].clone()).collect();
        let k = cfg.knn_k.min(x.len());
        if k < cfg.knn_k {
            log::warn!("multilabel: only {} training items sampled, using k = {k}", x.len());
        }
        let pred = knn_predict_multilabel(&x, &y, &test_x, k)?;
        let exact = pred.iter().zip(&gold).filter(|(p, g)| p == g).count() as f64 / gold.len() as f64;
        let mut agree = 0usize;
        for (p, g) in pred.iter().zip(&gold) {
            agree += universe.iter().filter(|l| p.contains(**l) == g.contains(**l)).count();
        }
        let labelwise = agree as f64 / (gold.len() * universe.len()) as f64;
        Ok((exact, labelwise))
    })?;
    let exact: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let labelwise: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let mut score = TaskScore::from_runs(exact);
    score.aux.insert("label_accuracy".into(), mean(&labelwise));
    Ok(score)
}

pub fn eval_clustering(ds: &[LabeledText], embedder: &dyn Embedder, cfg: &ProtocolConfig) -> Result<TaskScore> {
    let distinct: BTreeSet<&Label> = ds.iter().map(|r| &r.label).collect();
    if distinct.len() < 2 {
        return Err(Error::InvalidInput("clustering needs at least 2 gold labels".into()));
    }
    let emb = Embedded::new(
        embedder,
        ds.iter().map(|r| r.text.as_str()),
        cfg.prefix(PrefixKind::Clustering),
    )?;
    let x = emb.rows(ds.iter().map(|r| r.text.as_str()));
    let subset = cfg.kmeans_subset.min(ds.len());

    let runs = cfg.map_runs(|run| {
        let mut rng = stream_rng(cfg.base_seed, run);
        let mut picked = draw(&mut rng, ds.len(), subset);
        let mut k = distinct_labels(ds, &picked);
        if k < 2 {
            log::warn!("clustering run {run}: sample holds a single label, redrawing");
            picked = draw(&mut rng, ds.len(), subset);
            k = distinct_labels(ds, &picked);
            if k < 2 {
                return Err(Error::InvalidInput(format!(
                    "clustering run {run}: sample of {subset} holds fewer than 2 labels"
                )));
            }
        }
        let points: Vec<Vec<f64>> = picked.iter().map(|&i| x[i].clone()).collect();
        let gold: Vec<&Label> = picked.iter().map(|&i| &ds[i].label).collect();
        let fit = kmeans(&points, k, rng.random(), &KMeansOptions::default())?;
        v_measure(&gold, &fit.assignments)
    })?;
    Ok(TaskScore::from_runs(runs))
}

fn distinct_labels(ds: &[LabeledText], picked: &[usize]) -> usize {
    picked.iter().map(|&i| &ds[i].label).collect::<BTreeSet<_>>().len()
}

pub fn eval_sts(ds: &[ScoredPair], embedder: &dyn Embedder, cfg: &ProtocolConfig) -> Result<TaskScore> {
    let gold: Vec<f64> = ds.iter().map(|p| p.score).collect();
    if gold.len() < 2 || gold.iter().all(|&g| g == gold[0]) {
        return Err(Error::InvalidInput(
            "STS needs at least 2 pairs with distinct gold scores".into(),
        ));
    }
    let emb = Embedded::new(
        embedder,
        ds.iter().flat_map(|p| [p.sentence1.as_str(), p.sentence2.as_str()]),
        cfg.prefix(PrefixKind::Classification),
    )?;
    let sims = cosines(&emb, ds.iter().map(|p| (p.sentence1.as_str(), p.sentence2.as_str())));
    if sims.iter().all(|&s| s == sims[0]) {
        log::warn!("STS: every pair has the same cosine, scoring 0");
        return Ok(TaskScore::single(0.0));
    }
    Ok(TaskScore::single(spearman(&sims, &gold)?))
}

pub fn eval_reranking(
    ds: &[RerankQuery],
    metric: RerankMetric,
    embedder: &dyn Embedder,
    cfg: &ProtocolConfig,
) -> Result<TaskScore> {
    if ds.is_empty() {
        return Err(Error::InvalidInput("reranking dataset has no queries".into()));
    }
    if let Some(q) = ds.iter().find(|q| q.positive.is_empty() || q.negative.is_empty()) {
        return Err(Error::InvalidInput(format!(
            "reranking query `{}` needs at least one positive and one negative",
            q.query
        )));
    }
    let queries = Embedded::new(
        embedder,
        ds.iter().map(|q| q.query.as_str()),
        cfg.prefix(PrefixKind::SearchQuery),
    )?;
    let docs = Embedded::new(
        embedder,
        ds.iter()
            .flat_map(|q| q.positive.iter().chain(&q.negative).map(String::as_str)),
        cfg.prefix(PrefixKind::SearchDocument),
    )?;
    let rankings: Vec<Ranking> = ds
        .iter()
        .map(|q| {
            let qv = queries.row(&q.query);
            let scores: Vec<f64> = q
                .positive
                .iter()
                .chain(&q.negative)
                .map(|d| dot(qv, docs.row(d)))
                .collect();
            Ranking::from_scores(&scores)
        })
        .collect();
    let score = match metric {
        RerankMetric::MapAt10 => {
            let relevant: Vec<BTreeSet<usize>> = ds.iter().map(|q| (0..q.positive.len()).collect()).collect();
            map_at_k(&rankings, &relevant, cfg.map_k)?
        }
        RerankMetric::NdcgAt10 => {
            let mut per_query = Vec::with_capacity(ds.len());
            for (q, r) in ds.iter().zip(&rankings) {
                let grades: BTreeMap<usize, u32> = (0..q.positive.len()).map(|i| (i, 1)).collect();
                per_query.push(ndcg_at_k(r, &grades, cfg.ndcg_k, Gain::Linear)?);
            }
            mean(&per_query)
        }
    };
    Ok(TaskScore::single(score))
}

pub fn eval_retrieval(ds: &RetrievalData, embedder: &dyn Embedder, cfg: &ProtocolConfig) -> Result<TaskScore> {
    if ds.corpus.is_empty() {
        return Err(Error::InvalidInput("retrieval corpus is empty".into()));
    }
    let qrels = ds.qrels_map();
    let (judged, skipped): (Vec<_>, Vec<_>) = ds
        .queries
        .iter()
        .partition(|q| qrels.get(q.id.as_str()).is_some_and(|m| !m.is_empty()));
    if !skipped.is_empty() {
        log::warn!("retrieval: skipping {} queries without judgments", skipped.len());
    }
    if judged.is_empty() {
        return Err(Error::InvalidInput("no retrieval query has judgments".into()));
    }
    let doc_text: Vec<String> = ds.corpus.iter().map(|d| d.full_text()).collect();
    let docs = Embedded::new(
        embedder,
        doc_text.iter().map(String::as_str),
        cfg.prefix(PrefixKind::SearchDocument),
    )?;
    let queries = Embedded::new(
        embedder,
        judged.iter().map(|q| q.text.as_str()),
        cfg.prefix(PrefixKind::SearchQuery),
    )?;
    let doc_index: BTreeMap<&str, usize> = ds.corpus.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect();
    let rankings = cosine_topk(
        &queries.matrix_of(judged.iter().map(|q| q.text.as_str())),
        &docs.matrix_of(doc_text.iter().map(String::as_str)),
        cfg.ndcg_k.max(cfg.retrieval_depth),
    )?;
    let mut per_query = Vec::with_capacity(judged.len());
    for (q, r) in judged.iter().zip(&rankings) {
        let grades: BTreeMap<usize, u32> = qrels[q.id.as_str()]
            .iter()
            .map(|(doc, &g)| {
                doc_index
                    .get(doc)
                    .map(|&i| (i, g))
                    .ok_or_else(|| Error::Invariant(format!("qrels document `{doc}` is not in the corpus")))
            })
            .collect::<Result<_>>()?;
        per_query.push(ndcg_at_k(r, &grades, cfg.ndcg_k, cfg.gain)?);
    }
    let mut score = TaskScore::single(mean(&per_query));
    score.aux.insert("evaluated_queries".into(), judged.len() as f64);
    score.aux.insert("skipped_queries".into(), skipped.len() as f64);
    Ok(score)
}
