//! Learners used by the evaluation protocols. All are deterministic given
//! their inputs and seed.

mod kmeans;
mod knn;
mod logreg;

pub use kmeans::{kmeans, KMeansOptions, KMeansResult};
pub use knn::knn_predict_multilabel;
pub use logreg::{fit_logreg, LogRegModel, LogRegOptions};

use crate::error::{Error, Result};

pub(crate) fn check_rows(x: &[Vec<f64>]) -> Result<usize> {
    let d = x.first().map_or(0, Vec::len);
    for (i, r) in x.iter().enumerate() {
        if r.len() != d {
            return Err(Error::Shape(format!("row {i} has {} features, expected {d}", r.len())));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature row {i}")));
        }
    }
    Ok(d)
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
