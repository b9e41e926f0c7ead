//! Evaluation dataset schemas and JSONL ingestion.
//!
//! Every loader trims leading/trailing whitespace from texts, keeps line
//! order, and reports unknown fields as warnings. Labeled records are never
//! dropped silently: a record either loads or the whole file is rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    PairClassification,
    MultiLabel,
    Clustering,
    Sts,
    Reranking,
    Retrieval,
}

impl TaskKind {
    pub const ALL: [TaskKind; 7] = [
        TaskKind::Classification,
        TaskKind::PairClassification,
        TaskKind::MultiLabel,
        TaskKind::Clustering,
        TaskKind::Sts,
        TaskKind::Reranking,
        TaskKind::Retrieval,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Classification => "classification",
            TaskKind::PairClassification => "pair_classification",
            TaskKind::MultiLabel => "multilabel",
            TaskKind::Clustering => "clustering",
            TaskKind::Sts => "sts",
            TaskKind::Reranking => "reranking",
            TaskKind::Retrieval => "retrieval",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['-', ' '], "_");
        match norm.as_str() {
            "classification" => Ok(TaskKind::Classification),
            "pair_classification" | "pairclassification" => Ok(TaskKind::PairClassification),
            "multilabel" | "multi_label" | "multilabel_classification" => Ok(TaskKind::MultiLabel),
            "clustering" => Ok(TaskKind::Clustering),
            "sts" => Ok(TaskKind::Sts),
            "reranking" => Ok(TaskKind::Reranking),
            "retrieval" => Ok(TaskKind::Retrieval),
            _ => Err(Error::InvalidInput(format!("unknown task kind `{s}`"))),
        }
    }
}

/// A class label as written in the source file: integer or string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Int(i64),
    Str(String),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Int(i) => write!(f, "{i}"),
            Label::Str(s) => f.write_str(s),
        }
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::Str(s.to_string())
    }
}

impl From<i64> for Label {
    fn from(i: i64) -> Self {
        Label::Int(i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// A text with one class label. `split` is kept exactly as written; records
/// without a `split` field belong to the test split.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledText {
    pub text: String,
    pub label: Label,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabelText {
    pub text: String,
    pub labels: Vec<Label>,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextPair {
    pub sentence1: String,
    pub sentence2: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub sentence1: String,
    pub sentence2: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankQuery {
    pub query: String,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RerankMetric {
    #[default]
    #[serde(rename = "map@10")]
    MapAt10,
    #[serde(rename = "ndcg@10")]
    NdcgAt10,
}

impl fmt::Display for RerankMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RerankMetric::MapAt10 => "map@10",
            RerankMetric::NdcgAt10 => "ndcg@10",
        })
    }
}

impl FromStr for RerankMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "@").as_str() {
            "map@10" | "map" => Ok(RerankMetric::MapAt10),
            "ndcg@10" | "ndcg" => Ok(RerankMetric::NdcgAt10),
            _ => Err(Error::InvalidInput(format!("unknown reranking metric `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusDoc {
    pub id: String,
    pub title: Option<String>,
    pub text: String,
}

impl CorpusDoc {
    /// Text fed to the embedder: `title text` when a non-empty title exists.
    pub fn full_text(&self) -> String {
        match &self.title {
            Some(t) if !t.is_empty() => format!("{t} {}", self.text),
            _ => self.text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QrelLine {
    pub query_id: String,
    pub doc_id: String,
    pub grade: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationData {
    pub records: Vec<LabeledText>,
}

impl ClassificationData {
    pub fn train(&self) -> impl Iterator<Item = &LabeledText> {
        self.records.iter().filter(|r| r.split == Some(Split::Train))
    }

    pub fn test(&self) -> impl Iterator<Item = &LabeledText> {
        self.records.iter().filter(|r| r.split != Some(Split::Train))
    }

    pub fn classes(&self) -> BTreeSet<&Label> {
        self.records.iter().map(|r| &r.label).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabelData {
    pub records: Vec<MultiLabelText>,
}

impl MultiLabelData {
    pub fn train(&self) -> impl Iterator<Item = &MultiLabelText> {
        self.records.iter().filter(|r| r.split == Some(Split::Train))
    }

    pub fn test(&self) -> impl Iterator<Item = &MultiLabelText> {
        self.records.iter().filter(|r| r.split != Some(Split::Train))
    }

    pub fn label_universe(&self) -> BTreeSet<&Label> {
        self.records.iter().flat_map(|r| r.labels.iter()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalData {
    pub corpus: Vec<CorpusDoc>,
    pub queries: Vec<QueryRecord>,
    /// Qrels lines in file order.
    pub qrels: Vec<QrelLine>,
}

impl RetrievalData {
    /// `qid -> doc_id -> grade`.
    pub fn qrels_map(&self) -> BTreeMap<&str, BTreeMap<&str, u32>> {
        let mut map: BTreeMap<&str, BTreeMap<&str, u32>> = BTreeMap::new();
        for q in &self.qrels {
            map.entry(q.query_id.as_str())
                .or_default()
                .insert(q.doc_id.as_str(), q.grade);
        }
        map
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskDataset {
    Classification(ClassificationData),
    PairClassification(Vec<TextPair>),
    MultiLabel(MultiLabelData),
    Clustering(Vec<LabeledText>),
    Sts(Vec<ScoredPair>),
    Reranking {
        queries: Vec<RerankQuery>,
        metric: RerankMetric,
    },
    Retrieval(RetrievalData),
}

impl TaskDataset {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskDataset::Classification(_) => TaskKind::Classification,
            TaskDataset::PairClassification(_) => TaskKind::PairClassification,
            TaskDataset::MultiLabel(_) => TaskKind::MultiLabel,
            TaskDataset::Clustering(_) => TaskKind::Clustering,
            TaskDataset::Sts(_) => TaskKind::Sts,
            TaskDataset::Reranking { .. } => TaskKind::Reranking,
            TaskDataset::Retrieval(_) => TaskKind::Retrieval,
        }
    }

    /// Checks the per-kind invariants.
    pub fn validate(&self) -> Result<()> {
        match self {
            TaskDataset::Classification(d) => {
                if d.test().next().is_none() {
                    return Err(Error::Invariant("classification test split is empty".into()));
                }
                if d.classes().len() < 2 {
                    return Err(Error::Invariant(
                        "classification needs at least 2 distinct labels".into(),
                    ));
                }
            }
            TaskDataset::MultiLabel(d) => {
                if d.test().next().is_none() {
                    return Err(Error::Invariant("multilabel test split is empty".into()));
                }
                if d.label_universe().len() < 2 {
                    return Err(Error::Invariant("multilabel needs at least 2 distinct labels".into()));
                }
            }
            TaskDataset::PairClassification(pairs) => {
                if let Some((i, p)) = pairs.iter().enumerate().find(|(_, p)| p.label > 1) {
                    return Err(Error::Invariant(format!("pair {i}: label {} is not binary", p.label)));
                }
            }
            TaskDataset::Clustering(_) => {}
            TaskDataset::Sts(pairs) => {
                for (i, p) in pairs.iter().enumerate() {
                    if !(0.0..=1.0).contains(&p.score) {
                        return Err(Error::Invariant(format!(
                            "sts pair {i}: score {} outside [0, 1]",
                            p.score
                        )));
                    }
                }
            }
            TaskDataset::Reranking { queries, .. } => {
                for (i, q) in queries.iter().enumerate() {
                    if q.positive.is_empty() || q.negative.is_empty() {
                        return Err(Error::Invariant(format!(
                            "reranking query {i} needs at least one positive and one negative"
                        )));
                    }
                }
            }
            TaskDataset::Retrieval(d) => {
                let docs: BTreeSet<&str> = d.corpus.iter().map(|c| c.id.as_str()).collect();
                let qids: BTreeSet<&str> = d.queries.iter().map(|q| q.id.as_str()).collect();
                if docs.len() != d.corpus.len() {
                    return Err(Error::Invariant("duplicate corpus _id".into()));
                }
                if qids.len() != d.queries.len() {
                    return Err(Error::Invariant("duplicate query _id".into()));
                }
                for q in &d.qrels {
                    if !docs.contains(q.doc_id.as_str()) {
                        return Err(Error::Invariant(format!("qrels doc_id `{}` not in corpus", q.doc_id)));
                    }
                    if !qids.contains(q.query_id.as_str()) {
                        return Err(Error::Invariant(format!("qrels qid `{}` not in queries", q.query_id)));
                    }
                    if q.grade < 1 {
                        return Err(Error::Invariant(format!(
                            "qrels grade for ({}, {}) must be >= 1",
                            q.query_id, q.doc_id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Canonical JSONL rendering (keys sorted) for single-file kinds.
    /// Retrieval datasets render with [`RetrievalData::to_files`] instead.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let mut push = |m: Map<String, Value>| -> Result<()> {
            out.push_str(&serde_json::to_string(&Value::Object(m))?);
            out.push('\n');
            Ok(())
        };
        match self {
            TaskDataset::Classification(d) => {
                for r in &d.records {
                    push(labeled_to_json(r))?;
                }
            }
            TaskDataset::Clustering(records) => {
                for r in records {
                    push(labeled_to_json(r))?;
                }
            }
            TaskDataset::MultiLabel(d) => {
                for r in &d.records {
                    let mut m = Map::new();
                    m.insert("text".into(), r.text.clone().into());
                    m.insert("labels".into(), serde_json::to_value(&r.labels)?);
                    if let Some(s) = r.split {
                        m.insert("split".into(), serde_json::to_value(s)?);
                    }
                    push(m)?;
                }
            }
            TaskDataset::PairClassification(pairs) => {
                for p in pairs {
                    let mut m = Map::new();
                    m.insert("sentence1".into(), p.sentence1.clone().into());
                    m.insert("sentence2".into(), p.sentence2.clone().into());
                    m.insert("label".into(), p.label.into());
                    push(m)?;
                }
            }
            TaskDataset::Sts(pairs) => {
                for p in pairs {
                    let mut m = Map::new();
                    m.insert("sentence1".into(), p.sentence1.clone().into());
                    m.insert("sentence2".into(), p.sentence2.clone().into());
                    m.insert("score".into(), p.score.into());
                    push(m)?;
                }
            }
            TaskDataset::Reranking { queries, .. } => {
                for q in queries {
                    let mut m = Map::new();
                    m.insert("query".into(), q.query.clone().into());
                    m.insert("positive".into(), serde_json::to_value(&q.positive)?);
                    m.insert("negative".into(), serde_json::to_value(&q.negative)?);
                    push(m)?;
                }
            }
            TaskDataset::Retrieval(_) => {
                return Err(Error::InvalidInput(
                    "retrieval datasets serialize to three files; use RetrievalData::to_files".into(),
                ))
            }
        }
        Ok(out)
    }
}

fn labeled_to_json(r: &LabeledText) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("text".into(), r.text.clone().into());
    m.insert(
        "label".into(),
        match &r.label {
            Label::Int(i) => (*i).into(),
            Label::Str(s) => s.clone().into(),
        },
    );
    if let Some(s) = r.split {
        m.insert(
            "split".into(),
            match s {
                Split::Train => "train",
                Split::Test => "test",
            }
            .into(),
        );
    }
    m
}

impl RetrievalData {
    /// Renders `(corpus.jsonl, queries.jsonl, qrels.tsv)` contents.
    pub fn to_files(&self) -> Result<(String, String, String)> {
        let mut corpus = String::new();
        for d in &self.corpus {
            let mut m = Map::new();
            m.insert("_id".into(), d.id.clone().into());
            m.insert("text".into(), d.text.clone().into());
            if let Some(t) = &d.title {
                m.insert("title".into(), t.clone().into());
            }
            corpus.push_str(&serde_json::to_string(&Value::Object(m))?);
            corpus.push('\n');
        }
        let mut queries = String::new();
        for q in &self.queries {
            let mut m = Map::new();
            m.insert("_id".into(), q.id.clone().into());
            m.insert("text".into(), q.text.clone().into());
            queries.push_str(&serde_json::to_string(&Value::Object(m))?);
            queries.push('\n');
        }
        let mut qrels = String::new();
        for q in &self.qrels {
            qrels.push_str(&format!("{}\t{}\t{}\n", q.query_id, q.doc_id, q.grade));
        }
        Ok((corpus, queries, qrels))
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (c, q, r) = self.to_files()?;
        for (name, body) in [("corpus.jsonl", c), ("queries.jsonl", q), ("qrels.tsv", r)] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Ingestion switches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Divide STS scores by `sts_scale_max` so they land in `[0, 1]`.
    pub normalize_sts: bool,
    pub sts_scale_max: f64,
    /// Metric declared for reranking datasets (normally from the suite manifest).
    pub rerank_metric: RerankMetric,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            normalize_sts: false,
            sts_scale_max: 5.0,
            rerank_metric: RerankMetric::MapAt10,
        }
    }
}

/// Loads and validates a dataset. Retrieval expects a directory holding
/// `corpus.jsonl`, `queries.jsonl` and `qrels.tsv`; every other kind reads a
/// single JSONL file. Warnings are logged.
pub fn load_task_dataset(path: &Path, kind: TaskKind, opts: &LoadOptions) -> Result<TaskDataset> {
    let (ds, warnings) = load_task_dataset_with_warnings(path, kind, opts)?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(ds)
}

/// Same as [`load_task_dataset`] but hands the warnings back to the caller.
pub fn load_task_dataset_with_warnings(
    path: &Path,
    kind: TaskKind,
    opts: &LoadOptions,
) -> Result<(TaskDataset, Vec<String>)> {
    let mut warnings = Vec::new();
    let ds = match kind {
        TaskKind::Classification => {
            let mut records = Vec::new();
            for_each_line(path, &mut warnings, &["text", "label", "split"], |ctx, obj| {
                records.push(LabeledText {
                    text: ctx.text(obj, "text")?,
                    label: ctx.label(obj, "label")?,
                    split: ctx.split(obj)?,
                });
                Ok(())
            })?;
            TaskDataset::Classification(ClassificationData { records })
        }
        TaskKind::Clustering => {
            let mut records = Vec::new();
            for_each_line(path, &mut warnings, &["text", "label"], |ctx, obj| {
                records.push(LabeledText {
                    text: ctx.text(obj, "text")?,
                    label: ctx.label(obj, "label")?,
                    split: None,
                });
                Ok(())
            })?;
            TaskDataset::Clustering(records)
        }
        TaskKind::MultiLabel => {
            let mut records = Vec::new();
            for_each_line(path, &mut warnings, &["text", "labels", "split"], |ctx, obj| {
                let labels = match obj.get("labels") {
                    Some(Value::Array(items)) => items
                        .iter()
                        .map(|v| ctx.label_value(v, "labels"))
                        .collect::<Result<Vec<_>>>()?,
                    Some(_) => return Err(ctx.schema("labels", "expected an array")),
                    None => return Err(ctx.schema("labels", "missing")),
                };
                records.push(MultiLabelText {
                    text: ctx.text(obj, "text")?,
                    labels,
                    split: ctx.split(obj)?,
                });
                Ok(())
            })?;
            TaskDataset::MultiLabel(MultiLabelData { records })
        }
        TaskKind::PairClassification => {
            let mut pairs = Vec::new();
            for_each_line(path, &mut warnings, &["sentence1", "sentence2", "label"], |ctx, obj| {
                let label = match obj.get("label") {
                    None => return Err(ctx.schema("label", "missing")),
                    Some(v) => match v.as_u64() {
                        Some(l @ (0 | 1)) => l as u8,
                        _ => return Err(ctx.schema("label", "expected 0 or 1")),
                    },
                };
                pairs.push(TextPair {
                    sentence1: ctx.text(obj, "sentence1")?,
                    sentence2: ctx.text(obj, "sentence2")?,
                    label,
                });
                Ok(())
            })?;
            TaskDataset::PairClassification(pairs)
        }
        TaskKind::Sts => {
            let mut pairs = Vec::new();
            for_each_line(path, &mut warnings, &["sentence1", "sentence2", "score"], |ctx, obj| {
                let raw = match obj.get("score") {
                    Some(v) => v.as_f64().ok_or_else(|| ctx.schema("score", "expected a number"))?,
                    None => return Err(ctx.schema("score", "missing")),
                };
                if !raw.is_finite() {
                    return Err(ctx.schema("score", "not finite"));
                }
                let score = if opts.normalize_sts {
                    raw / opts.sts_scale_max
                } else {
                    raw
                };
                pairs.push(ScoredPair {
                    sentence1: ctx.text(obj, "sentence1")?,
                    sentence2: ctx.text(obj, "sentence2")?,
                    score,
                });
                Ok(())
            })?;
            TaskDataset::Sts(pairs)
        }
        TaskKind::Reranking => {
            let mut queries = Vec::new();
            for_each_line(path, &mut warnings, &["query", "positive", "negative"], |ctx, obj| {
                queries.push(RerankQuery {
                    query: ctx.text(obj, "query")?,
                    positive: ctx.text_list(obj, "positive")?,
                    negative: ctx.text_list(obj, "negative")?,
                });
                Ok(())
            })?;
            TaskDataset::Reranking {
                queries,
                metric: opts.rerank_metric,
            }
        }
        TaskKind::Retrieval => TaskDataset::Retrieval(load_retrieval(path, &mut warnings)?),
    };
    ds.validate()?;
    Ok((ds, warnings))
}

fn load_retrieval(dir: &Path, warnings: &mut Vec<String>) -> Result<RetrievalData> {
    let mut corpus = Vec::new();
    for_each_line(
        &dir.join("corpus.jsonl"),
        warnings,
        &["_id", "text", "title"],
        |ctx, obj| {
            let title = match obj.get("title") {
                None | Some(Value::Null) => None,
                Some(Value::String(s)) => Some(s.trim().to_string()),
                Some(_) => return Err(ctx.schema("title", "expected a string")),
            };
            corpus.push(CorpusDoc {
                id: ctx.id(obj)?,
                title,
                text: ctx.text(obj, "text")?,
            });
            Ok(())
        },
    )?;
    let mut queries = Vec::new();
    for_each_line(&dir.join("queries.jsonl"), warnings, &["_id", "text"], |ctx, obj| {
        queries.push(QueryRecord {
            id: ctx.id(obj)?,
            text: ctx.text(obj, "text")?,
        });
        Ok(())
    })?;
    let qrels = load_qrels(&dir.join("qrels.tsv"), warnings)?;
    Ok(RetrievalData { corpus, queries, qrels })
}

/// Reads `qid<TAB>doc_id<TAB>grade` lines. A non-numeric grade on the first
/// line is treated as a header. Grade-0 lines carry no relevance and are
/// skipped with a warning.
pub fn load_qrels(path: &Path, warnings: &mut Vec<String>) -> Result<Vec<QrelLine>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, raw) in body.lines().enumerate() {
        let line_no = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("expected 3 tab-separated columns, found {}", cols.len()),
            });
        }
        let grade: i64 = match cols[2].parse() {
            Ok(g) => g,
            Err(_) if line_no == 1 => continue,
            Err(_) => {
                return Err(Error::Schema {
                    path: path.to_path_buf(),
                    line: line_no,
                    field: "grade".into(),
                    message: format!("`{}` is not an integer", cols[2]),
                })
            }
        };
        if grade == 0 {
            warnings.push(format!(
                "{}:{line_no}: grade 0 for ({}, {}) skipped",
                path.display(),
                cols[0],
                cols[1]
            ));
            continue;
        }
        if grade < 0 {
            return Err(Error::Invariant(format!(
                "{}:{line_no}: negative grade {grade}",
                path.display()
            )));
        }
        out.push(QrelLine {
            query_id: cols[0].to_string(),
            doc_id: cols[1].to_string(),
            grade: grade as u32,
        });
    }
    Ok(out)
}

pub(crate) struct LineCtx<'a> {
    pub path: &'a Path,
    pub line: usize,
}

impl LineCtx<'_> {
    pub fn schema(&self, field: &str, message: &str) -> Error {
        Error::Schema {
            path: self.path.to_path_buf(),
            line: self.line,
            field: field.to_string(),
            message: message.to_string(),
        }
    }

    pub fn text(&self, obj: &Map<String, Value>, field: &str) -> Result<String> {
        match obj.get(field) {
            Some(Value::String(s)) => Ok(s.trim().to_string()),
            Some(_) => Err(self.schema(field, "expected a string")),
            None => Err(self.schema(field, "missing")),
        }
    }

    pub fn text_list(&self, obj: &Map<String, Value>, field: &str) -> Result<Vec<String>> {
        match obj.get(field) {
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(|s| s.trim().to_string())
                        .ok_or_else(|| self.schema(field, "expected an array of strings"))
                })
                .collect(),
            Some(_) => Err(self.schema(field, "expected an array of strings")),
            None => Err(self.schema(field, "missing")),
        }
    }

    fn id(&self, obj: &Map<String, Value>) -> Result<String> {
        match obj.get("_id") {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Number(n)) => Ok(n.to_string()),
            Some(_) => Err(self.schema("_id", "expected a string")),
            None => Err(self.schema("_id", "missing")),
        }
    }

    fn label(&self, obj: &Map<String, Value>, field: &str) -> Result<Label> {
        match obj.get(field) {
            Some(v) => self.label_value(v, field),
            None => Err(self.schema(field, "missing")),
        }
    }

    fn label_value(&self, v: &Value, field: &str) -> Result<Label> {
        match v {
            Value::String(s) => Ok(Label::Str(s.clone())),
            Value::Number(n) => n
                .as_i64()
                .map(Label::Int)
                .ok_or_else(|| self.schema(field, "integer labels must fit in i64")),
            _ => Err(self.schema(field, "expected a string or integer label")),
        }
    }

    fn split(&self, obj: &Map<String, Value>) -> Result<Option<Split>> {
        match obj.get("split") {
            None => Ok(None),
            Some(Value::String(s)) if s == "train" => Ok(Some(Split::Train)),
            Some(Value::String(s)) if s == "test" => Ok(Some(Split::Test)),
            Some(_) => Err(self.schema("split", "expected \"train\" or \"test\"")),
        }
    }
}

/// Drives `f` over each non-blank JSONL line of `path`.
pub(crate) fn for_each_line<F>(path: &Path, warnings: &mut Vec<String>, known: &[&str], mut f: F) -> Result<()>
where
    F: FnMut(&LineCtx<'_>, &Map<String, Value>) -> Result<()>,
{
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for (i, raw) in body.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let ctx = LineCtx { path, line: i + 1 };
        let value: Value = serde_json::from_str(raw).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: ctx.line,
            message: e.to_string(),
        })?;
        let Value::Object(obj) = value else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: ctx.line,
                message: "expected a JSON object".into(),
            });
        };
        for key in obj.keys() {
            if !known.contains(&key.as_str()) {
                warnings.push(format!(
                    "{}:{}: unknown field `{key}` ignored",
                    path.display(),
                    ctx.line
                ));
            }
        }
        f(&ctx, &obj)?;
    }
    Ok(())
}

/// Where a dataset lives on disk, relative paths resolved.
pub fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
