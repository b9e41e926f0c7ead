//! Embedders: the trait the evaluation engine drives, the trainable toy
//! model, and a store of precomputed vectors.

mod checkpoint;
mod remote;
mod store;
pub mod stub;
mod tokenizer;
mod toy;

use std::sync::Arc;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use remote::{RemoteConfig, RemoteEmbedder, RemoteStats, TOKEN_ENV};
pub use store::PrecomputedEmbedder;
pub use tokenizer::{count_tokens, fnv1a64, tokenize, CLS_ID};
pub(crate) use toy::BatchForward;
pub use toy::{
    embed_backward, embed_batch, init_params, Pooling, ToyEmbedder, ToyParams, DEFAULT_DIM, DEFAULT_MAX_TOKENS,
    DEFAULT_VOCAB,
};

use crate::data::PrefixKind;
use crate::error::{Error, Result};

/// Tolerance on the unit-norm row invariant.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Row-major `n x d` matrix of unit-L2 rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    /// Wraps already-normalized data, checking finiteness and unit norms.
    pub fn from_normalized(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        let m = Self::from_raw_unchecked(rows, dim, data)?;
        m.validate()?;
        Ok(m)
    }

    fn from_raw_unchecked(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::Shape(format!("{} values for a {rows}x{dim} matrix", data.len())));
        }
        Ok(Self { rows, dim, data })
    }

    /// Normalizes each row to unit L2 norm. Zero or non-finite rows are errors.
    pub fn normalize_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let n = rows.len();
        let mut data = Vec::with_capacity(n * dim);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != dim {
                return Err(Error::Shape(format!(
                    "row {i} has dimension {}, expected {dim}",
                    r.len()
                )));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("row {i}")));
            }
            let norm = l2_norm(&r);
            if norm == 0.0 {
                return Err(Error::InvalidInput(format!("row {i} has zero norm")));
            }
            data.extend(r.iter().map(|x| x / norm));
        }
        Ok(Self { rows: n, dim, data })
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..self.rows {
            let r = self.row(i);
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("embedding row {i}")));
            }
            let n = l2_norm(r);
            if (n - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::Invariant(format!("embedding row {i} has norm {n}")));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rows `idx` in the given order.
    pub fn select(&self, idx: &[usize]) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        EmbeddingMatrix {
            rows: idx.len(),
            dim: self.dim,
            data,
        }
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.rows)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Anything that maps texts to unit-norm vectors.
pub trait Embedder: Send + Sync {
    /// Embeds `texts` after applying `prefix`; row `i` belongs to `texts[i]`.
    fn embed(&self, texts: &[String], prefix: PrefixKind) -> Result<EmbeddingMatrix>;
}

impl<T: Embedder + ?Sized> Embedder for &T {
    fn embed(&self, texts: &[String], prefix: PrefixKind) -> Result<EmbeddingMatrix> {
        (**self).embed(texts, prefix)
    }
}

impl<T: Embedder + ?Sized> Embedder for Arc<T> {
    fn embed(&self, texts: &[String], prefix: PrefixKind) -> Result<EmbeddingMatrix> {
        (**self).embed(texts, prefix)
    }
}

impl<T: Embedder + ?Sized> Embedder for Box<T> {
    fn embed(&self, texts: &[String], prefix: PrefixKind) -> Result<EmbeddingMatrix> {
        (**self).embed(texts, prefix)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_rows_gives_unit_rows() {
        let m = EmbeddingMatrix::normalize_rows(vec![vec![3.0, 4.0], vec![0.0, 2.0]]).unwrap();
        assert_eq!(m.row(0), &[0.6, 0.8]);
        assert_eq!(m.row(1), &[0.0, 1.0]);
        m.validate().unwrap();
    }

    #[test]
    fn zero_and_nan_rows_rejected() {
        assert!(EmbeddingMatrix::normalize_rows(vec![vec![0.0, 0.0]]).is_err());
        assert!(matches!(
            EmbeddingMatrix::normalize_rows(vec![vec![f64::NAN, 1.0]]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(matches!(
            EmbeddingMatrix::normalize_rows(vec![vec![1.0], vec![1.0, 0.0]]),
            Err(Error::Shape(_))
        ));
    }
}
