//! Precomputed embeddings keyed by id.
//!
//! On disk: `vectors.jsonl` with lines `{"id": str, "vector": [float]}` and a
//! sidecar `vectors.count` holding the line count. Ids are the texts the
//! vectors belong to; a lookup tries the prefixed text first, then the bare
//! text.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{l2_norm, Embedder, EmbeddingMatrix};
use crate::data::{apply_prefix, PrefixKind};
use crate::error::{Error, Result};

const NORM_WARN_TOL: f64 = 1e-6;

#[derive(Debug, Serialize, Deserialize)]
struct VectorLine {
    id: String,
    vector: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PrecomputedEmbedder {
    index: HashMap<String, usize>,
    vectors: EmbeddingMatrix,
}

impl PrecomputedEmbedder {
    /// Builds a store from `(id, vector)` pairs, re-normalizing every row.
    pub fn from_entries(entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        Ok(Self::from_entries_with_warnings(entries)?.0)
    }

    fn from_entries_with_warnings(entries: Vec<(String, Vec<f64>)>) -> Result<(Self, Vec<String>)> {
        if entries.is_empty() {
            return Err(Error::InvalidInput("empty embedding store".into()));
        }
        let mut warnings = Vec::new();
        let mut index = HashMap::with_capacity(entries.len());
        let mut rows = Vec::with_capacity(entries.len());
        for (i, (id, v)) in entries.into_iter().enumerate() {
            let n = l2_norm(&v);
            if n.is_finite() && (n - 1.0).abs() > NORM_WARN_TOL {
                warnings.push(format!("vector `{id}` has norm {n}; re-normalized"));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate vector id `{id}`")));
            }
            rows.push(v);
        }
        Ok((
            Self {
                index,
                vectors: EmbeddingMatrix::normalize_rows(rows)?,
            },
            warnings,
        ))
    }

    /// Loads `dir/vectors.jsonl`, checking the `dir/vectors.count` sidecar.
    pub fn load(dir: &Path) -> Result<Self> {
        let (store, warnings) = Self::load_with_warnings(dir)?;
        for w in warnings {
            log::warn!("{w}");
        }
        Ok(store)
    }

    pub fn load_with_warnings(dir: &Path) -> Result<(Self, Vec<String>)> {
        let path = dir.join("vectors.jsonl");
        let body = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut entries = Vec::new();
        for (i, line) in body.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: VectorLine = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.push((v.id, v.vector));
        }
        let count_path = dir.join("vectors.count");
        let declared = fs::read_to_string(&count_path).map_err(|e| Error::io(&count_path, e))?;
        let declared: usize = declared.trim().parse().map_err(|_| Error::Parse {
            path: count_path.clone(),
            line: 1,
            message: "expected a line count".into(),
        })?;
        if declared != entries.len() {
            return Err(Error::Invariant(format!(
                "{} declares {declared} vectors but {} were read",
                count_path.display(),
                entries.len()
            )));
        }
        Self::from_entries_with_warnings(entries)
    }

    /// Writes the store layout for `entries`.
    pub fn write(dir: &Path, entries: &[(String, Vec<f64>)]) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut body = String::new();
        for (id, v) in entries {
            body.push_str(&serde_json::to_string(&VectorLine {
                id: id.clone(),
                vector: v.clone(),
            })?);
            body.push('\n');
        }
        let p = dir.join("vectors.jsonl");
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        let c = dir.join("vectors.count");
        fs::write(&c, format!("{}\n", entries.len())).map_err(|e| Error::io(&c, e))
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    fn lookup(&self, text: &str, prefix: PrefixKind) -> Option<usize> {
        self.index
            .get(&apply_prefix(prefix, text))
            .or_else(|| self.index.get(text))
            .copied()
    }
}

impl Embedder for PrecomputedEmbedder {
    fn embed(&self, texts: &[String], prefix: PrefixKind) -> Result<EmbeddingMatrix> {
        let idx = texts
            .iter()
            .map(|t| {
                self.lookup(t, prefix)
                    .ok_or_else(|| Error::InvalidInput(format!("no precomputed vector for `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.vectors.select(&idx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_renormalizes_and_warns() {
        let dir = tempfile::tempdir().unwrap();
        PrecomputedEmbedder::write(
            dir.path(),
            &[("a".into(), vec![2.0, 0.0]), ("b".into(), vec![0.0, 1.0])],
        )
        .unwrap();
        let (s, w) = PrecomputedEmbedder::load_with_warnings(dir.path()).unwrap();
        assert_eq!(w.len(), 1);
        let m = s
            .embed(&["a".into(), "b".into(), "a".into()], PrefixKind::None)
            .unwrap();
        assert_eq!(m.row(0), &[1.0, 0.0]);
        assert_eq!(m.row(2), &[1.0, 0.0]);
    }

    #[test]
    fn count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        PrecomputedEmbedder::write(dir.path(), &[("a".into(), vec![1.0])]).unwrap();
        fs::write(dir.path().join("vectors.count"), "2\n").unwrap();
        assert!(matches!(
            PrecomputedEmbedder::load(dir.path()),
            Err(Error::Invariant(_))
        ));
    }

    #[test]
    fn prefixed_ids_take_priority() {
        let s = PrecomputedEmbedder::from_entries(vec![
            ("x".into(), vec![1.0, 0.0]),
            ("search_query: x".into(), vec![0.0, 1.0]),
        ])
        .unwrap();
        assert_eq!(
            s.embed(&["x".into()], PrefixKind::SearchQuery).unwrap().row(0),
            &[0.0, 1.0]
        );
        assert_eq!(
            s.embed(&["x".into()], PrefixKind::Clustering).unwrap().row(0),
            &[1.0, 0.0]
        );
        assert!(s.embed(&["y".into()], PrefixKind::None).is_err());
    }
}
