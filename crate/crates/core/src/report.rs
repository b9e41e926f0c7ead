//! Evaluation reports: aggregation, canonical JSON and a plain-text table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::TaskKind;
use crate::error::{Error, Result};
use crate::eval::{ProtocolConfig, TaskScore};
use crate::json::to_canonical_string;

/// Tolerance on the mean invariants of a report.
pub const AGGREGATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Mean of per-category means.
    #[default]
    CategoryMean,
    /// Mean over all tasks.
    TaskMean,
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregationMode::CategoryMean => "category",
            AggregationMode::TaskMean => "task",
        })
    }
}

impl FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "category" | "category_mean" => Ok(AggregationMode::CategoryMean),
            "task" | "task_mean" => Ok(AggregationMode::TaskMean),
            other => Err(Error::InvalidInput(format!("unknown aggregation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub per_category: BTreeMap<String, f64>,
    pub overall: f64,
}

/// Averages task scores within categories (`category -> member tasks`) and
/// then overall according to `mode`.
pub fn aggregate_report(
    per_task: &BTreeMap<String, f64>,
    categories: &BTreeMap<String, Vec<String>>,
    mode: AggregationMode,
) -> Result<Aggregate> {
    if per_task.is_empty() {
        return Err(Error::InvalidInput("no task scores to aggregate".into()));
    }
    let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
    let mut per_category = BTreeMap::new();
    for (cat, tasks) in categories {
        if tasks.is_empty() {
            return Err(Error::InvalidInput(format!("category `{cat}` has no tasks")));
        }
        let mut sum = 0.0;
        for t in tasks {
            if let Some(prev) = owner.insert(t, cat) {
                return Err(Error::InvalidInput(format!(
                    "task `{t}` is in both `{prev}` and `{cat}`"
                )));
            }
            sum += per_task
                .get(t)
                .ok_or_else(|| Error::InvalidInput(format!("category `{cat}` lists unknown task `{t}`")))?;
        }
        per_category.insert(cat.clone(), sum / tasks.len() as f64);
    }
    if let Some(t) = per_task.keys().find(|t| !owner.contains_key(t.as_str())) {
        return Err(Error::InvalidInput(format!("task `{t}` has no category")));
    }
    let overall = match mode {
        AggregationMode::CategoryMean => per_category.values().sum::<f64>() / per_category.len() as f64,
        AggregationMode::TaskMean => per_task.values().sum::<f64>() / per_task.len() as f64,
    };
    Ok(Aggregate { per_category, overall })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub category: String,
    pub kind: String,
    pub score: f64,
    pub runs: Vec<f64>,
    pub aux: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_task: BTreeMap<String, f64>,
    pub per_category: BTreeMap<String, f64>,
    pub overall: f64,
    pub aggregation_mode: AggregationMode,
    pub seed: u64,
    pub protocol_config: ProtocolConfig,
    /// SHA-256 of the canonical protocol configuration and aggregation mode.
    pub config_hash: String,
    pub version: String,
    pub tasks: BTreeMap<String, TaskEntry>,
}

/// Hex SHA-256 of the canonical JSON form of `value`.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let canon = to_canonical_string(value)?;
    Ok(hex::encode(Sha256::digest(canon.as_bytes())))
}

impl EvalReport {
    /// Assembles a report from `(name, category, kind, score)` rows.
    pub fn build(
        rows: impl IntoIterator<Item = (String, String, TaskKind, TaskScore)>,
        cfg: &ProtocolConfig,
        mode: AggregationMode,
    ) -> Result<Self> {
        let mut per_task = BTreeMap::new();
        let mut categories: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut tasks = BTreeMap::new();
        for (name, category, kind, score) in rows {
            if per_task.insert(name.clone(), score.score).is_some() {
                return Err(Error::InvalidInput(format!("duplicate task name `{name}`")));
            }
            categories.entry(category.clone()).or_default().push(name.clone());
            tasks.insert(
                name,
                TaskEntry {
                    category,
                    kind: kind.as_str().to_string(),
                    score: score.score,
                    runs: score.runs,
                    aux: score.aux,
                },
            );
        }
        let agg = aggregate_report(&per_task, &categories, mode)?;
        let config_hash = config_hash(&serde_json::json!({
            "aggregation_mode": mode,
            "protocol_config": cfg,
        }))?;
        Ok(Self {
            per_task,
            per_category: agg.per_category,
            overall: agg.overall,
            aggregation_mode: mode,
            seed: cfg.base_seed,
            protocol_config: cfg.clone(),
            config_hash,
            version: crate::VERSION.to_string(),
            tasks,
        })
    }

    /// Checks the mean invariants.
    pub fn validate(&self) -> Result<()> {
        let mut categories: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (name, t) in &self.tasks {
            categories.entry(t.category.clone()).or_default().push(name.clone());
        }
        let agg = aggregate_report(&self.per_task, &categories, self.aggregation_mode)?;
        let cats: BTreeSet<_> = self.per_category.keys().collect();
        if cats != agg.per_category.keys().collect() {
            return Err(Error::Invariant("report categories do not match its tasks".into()));
        }
        for (c, v) in &agg.per_category {
            if (self.per_category[c] - v).abs() > AGGREGATE_TOL {
                return Err(Error::Invariant(format!("category `{c}` mean is inconsistent")));
            }
        }
        if (self.overall - agg.overall).abs() > AGGREGATE_TOL {
            return Err(Error::Invariant("overall score is inconsistent".into()));
        }
        Ok(())
    }

    /// Canonical JSON: sorted keys, 17 significant digits.
    pub fn to_json(&self) -> Result<String> {
        to_canonical_string(self)
    }

    /// Aligned plain-text table of tasks, categories and the overall score.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<[String; 4]> = vec![["task".into(), "category".into(), "kind".into(), "score".into()]];
        for (name, t) in &self.tasks {
            rows.push([
                name.clone(),
                t.category.clone(),
                t.kind.clone(),
                format!("{:.4}", t.score),
            ]);
        }
        for (cat, v) in &self.per_category {
            rows.push(["".into(), cat.clone(), "(mean)".into(), format!("{v:.4}")]);
        }
        rows.push([
            "overall".into(),
            "".into(),
            format!("({} mean)", self.aggregation_mode),
            format!("{:.4}", self.overall),
        ]);
        let mut widths = [0usize; 4];
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        for (i, r) in rows.iter().enumerate() {
            let line = format!(
                "| {:<w0$} | {:<w1$} | {:<w2$} | {:>w3$} |",
                r[0],
                r[1],
                r[2],
                r[3],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3]
            );
            out.push_str(&line);
            out.push('\n');
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(w + 2)).collect();
                out.push_str(&format!("|{}|\n", rule.join("|")));
            }
        }
        out
    }
}
