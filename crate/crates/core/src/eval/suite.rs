use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{evaluate_task, ProtocolConfig};
use crate::data::{load_task_dataset, resolve, LoadOptions, TaskDataset, TaskKind};
use crate::embed::Embedder;
use crate::error::{Error, Result};
use crate::report::{AggregationMode, EvalReport};

/// One line of a suite manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteEntry {
    pub name: String,
    pub category: String,
    pub kind: String,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteTask {
    pub name: String,
    pub category: String,
    pub dataset: TaskDataset,
}

fn check_unique<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::InvalidInput(format!("duplicate task name `{n}`")).in_task(n));
        }
    }
    Ok(())
}

/// Reads a manifest (a JSON list of [`SuiteEntry`]) and loads every dataset.
/// Relative dataset paths resolve against the manifest's directory.
pub fn load_suite(manifest: &Path) -> Result<Vec<SuiteTask>> {
    let raw = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let entries: Vec<SuiteEntry> = serde_json::from_str(&raw).map_err(|e| Error::Parse {
        path: manifest.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if entries.is_empty() {
        return Err(Error::InvalidInput(format!("{} lists no tasks", manifest.display())));
    }
    check_unique(entries.iter().map(|e| e.name.as_str()))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    entries
        .into_iter()
        .map(|e| {
            let load = || -> Result<SuiteTask> {
                let kind: TaskKind = e.kind.parse()?;
                let mut opts = LoadOptions::default();
                if let Some(m) = &e.metric {
                    if kind != TaskKind::Reranking {
                        return Err(Error::InvalidInput(format!(
                            "metric `{m}` is only meaningful for reranking"
                        )));
                    }
                    opts.rerank_metric = m.parse()?;
                }
                let dataset = load_task_dataset(&resolve(base, &e.path), kind, &opts)?;
                Ok(SuiteTask {
                    name: e.name.clone(),
                    category: e.category.clone(),
                    dataset,
                })
            };
            load().map_err(|err| err.in_task(&e.name))
        })
        .collect()
}

/// Evaluates every task in order and aggregates the scores.
pub fn run_benchmark(
    suite: &[SuiteTask],
    embedder: &dyn Embedder,
    cfg: &ProtocolConfig,
    mode: AggregationMode,
) -> Result<EvalReport> {
    if suite.is_empty() {
        return Err(Error::InvalidInput("benchmark suite is empty".into()));
    }
    check_unique(suite.iter().map(|t| t.name.as_str()))?;
    cfg.validate()?;
    let mut results = Vec::with_capacity(suite.len());
    for task in suite {
        log::info!("evaluating {} ({})", task.name, task.dataset.kind().as_str());
        let score = evaluate_task(&task.dataset, embedder, cfg).map_err(|e| e.in_task(&task.name))?;
        log::info!("{}: {:.4}", task.name, score.score);
        results.push((task, score));
    }
    EvalReport::build(
        results
            .into_iter()
            .map(|(t, s)| (t.name.clone(), t.category.clone(), t.dataset.kind(), s)),
        cfg,
        mode,
    )
}
