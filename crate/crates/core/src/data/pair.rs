use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::dataset::for_each_line;
use super::prefix::{assign_prefix, PairRole, PrefixKind};
use crate::error::{Error, Result};

/// One contrastive training example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub dataset_id: String,
    pub query: String,
    pub positive: String,
    #[serde(default)]
    pub hard_negatives: Vec<String>,
    pub query_prefix: PrefixKind,
    pub document_prefix: PrefixKind,
}

impl TrainingPair {
    /// Builds a pair with prefixes chosen from `role`. Texts are trimmed and
    /// negatives equal to the positive are removed.
    pub fn new(
        dataset_id: impl Into<String>,
        query: &str,
        positive: &str,
        hard_negatives: impl IntoIterator<Item = String>,
        role: PairRole,
    ) -> Result<Self> {
        let (query_prefix, document_prefix) = assign_prefix(role);
        let positive = positive.trim().to_string();
        let pair = TrainingPair {
            dataset_id: dataset_id.into(),
            query: query.trim().to_string(),
            hard_negatives: hard_negatives
                .into_iter()
                .map(|n| n.trim().to_string())
                .filter(|n| *n != positive)
                .collect(),
            positive,
            query_prefix,
            document_prefix,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        if self.query.trim().is_empty() {
            return Err(Error::Invariant(format!(
                "training pair in `{}` has an empty query",
                self.dataset_id
            )));
        }
        if self.positive.trim().is_empty() {
            return Err(Error::Invariant(format!(
                "training pair in `{}` has an empty positive",
                self.dataset_id
            )));
        }
        if self.hard_negatives.contains(&self.positive) {
            return Err(Error::Invariant(format!(
                "training pair in `{}` lists its positive as a hard negative",
                self.dataset_id
            )));
        }
        Ok(())
    }

    /// Positive followed by hard negatives.
    pub fn documents(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.positive.as_str()).chain(self.hard_negatives.iter().map(String::as_str))
    }
}

/// Reads training pairs from JSONL. Each line carries `dataset_id`, `query`,
/// `positive`, optional `hard_negatives`, and either explicit
/// `query_prefix`/`document_prefix` names or a `role`
/// (`retrieval` when absent).
pub fn load_training_pairs(path: &Path) -> Result<Vec<TrainingPair>> {
    let mut warnings = Vec::new();
    let mut out = Vec::new();
    let known = [
        "dataset_id",
        "query",
        "positive",
        "hard_negatives",
        "query_prefix",
        "document_prefix",
        "role",
    ];
    for_each_line(path, &mut warnings, &known, |ctx, obj| {
        let dataset_id = ctx.text(obj, "dataset_id")?;
        let query = ctx.text(obj, "query")?;
        let positive = ctx.text(obj, "positive")?;
        let hard_negatives = if obj.contains_key("hard_negatives") {
            ctx.text_list(obj, "hard_negatives")?
        } else {
            Vec::new()
        };
        let role = match obj.get("role") {
            None => PairRole::Retrieval,
            Some(Value::String(s)) => s.parse().map_err(|_| ctx.schema("role", "unknown pair role"))?,
            Some(_) => return Err(ctx.schema("role", "expected a string")),
        };
        let (mut qp, mut dp) = assign_prefix(role);
        if let Some(v) = obj.get("query_prefix") {
            qp = v
                .as_str()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ctx.schema("query_prefix", "unknown prefix"))?;
        }
        if let Some(v) = obj.get("document_prefix") {
            dp = v
                .as_str()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ctx.schema("document_prefix", "unknown prefix"))?;
        }
        let pair = TrainingPair {
            dataset_id,
            query,
            positive,
            hard_negatives,
            query_prefix: qp,
            document_prefix: dp,
        };
        pair.validate().map_err(|e| ctx.schema("positive", &e.to_string()))?;
        out.push(pair);
        Ok(())
    })?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(out)
}

pub fn write_training_pairs(path: &Path, pairs: &[TrainingPair]) -> Result<()> {
    let mut body = String::new();
    for p in pairs {
        body.push_str(&serde_json::to_string(p)?);
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_is_stripped_from_negatives() {
        let p = TrainingPair::new(
            "d",
            " q ",
            "pos",
            vec!["pos".to_string(), "neg".to_string()],
            PairRole::Retrieval,
        )
        .unwrap();
        assert_eq!(p.hard_negatives, vec!["neg"]);
        assert_eq!(p.query, "q");
        assert_eq!(p.query_prefix, PrefixKind::SearchQuery);
    }

    #[test]
    fn empty_query_rejected() {
        assert!(TrainingPair::new("d", "  ", "pos", vec![], PairRole::Symmetric).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        let pairs = vec![
            TrainingPair::new("a", "q1", "p1", vec!["n1".into()], PairRole::Retrieval).unwrap(),
            TrainingPair::new("b", "q2", "p2", vec![], PairRole::TitleToDocument).unwrap(),
        ];
        write_training_pairs(&path, &pairs).unwrap();
        assert_eq!(load_training_pairs(&path).unwrap(), pairs);
    }

    #[test]
    fn role_field_selects_prefixes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        fs::write(
            &path,
            "{\"dataset_id\":\"x\",\"query\":\"a\",\"positive\":\"b\",\"role\":\"symmetric\"}\n",
        )
        .unwrap();
        let pairs = load_training_pairs(&path).unwrap();
        assert_eq!(pairs[0].query_prefix, PrefixKind::Classification);
        assert_eq!(pairs[0].document_prefix, PrefixKind::Classification);
    }
}
