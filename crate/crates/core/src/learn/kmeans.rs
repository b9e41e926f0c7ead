//! Lloyd's k-means with a single k-means++ initialization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_rows, sq_dist};
use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each assignment step, ending with the final one.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, mu) in centroids.iter().enumerate() {
        let d = sq_dist(p, mu);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(x: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    x.iter().map(|p| nearest(p, centroids)).unzip()
}

fn plus_plus_init(x: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from(seed);
    let n = x.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = x.iter().map(|p| sq_dist(p, &x[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` just short of `target`.
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("total > 0"))
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (d, p) in d2.iter_mut().zip(x) {
            *d = d.min(sq_dist(p, &x[next]));
        }
    }
    chosen.into_iter().map(|i| x[i].clone()).collect()
}

/// Clusters the rows of `x` into `k` groups. Deterministic for a fixed seed.
pub fn kmeans(x: &[Vec<f64>], k: usize, seed: u64, opts: &KMeansOptions) -> Result<KMeansResult> {
    let n = x.len();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("k = {k} must be in 1..={n}")));
    }
    let d = check_rows(x)?;
    let mut centroids = plus_plus_init(x, k, seed);
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let (labels, dists) = assign(x, &centroids);
        history.push(dists.iter().sum());
        iterations += 1;

        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in x.iter().zip(&labels) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        let mut next = Vec::with_capacity(k);
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                next.push(sums[c].iter().map(|s| s * inv).collect());
                continue;
            }
            let far = (0..n)
                .filter(|&i| !taken[i])
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dists[b] >= dists[i] => Some(b),
                    _ => Some(i),
                })
                .expect("k <= n leaves a free point");
            taken[far] = true;
            log::debug!("k-means: reseeding empty cluster {c} at point {far}");
            next.push(x[far].clone());
        }
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < opts.tol {
            break;
        }
    }
    let (assignments, dists) = assign(x, &centroids);
    let inertia = dists.iter().sum();
    history.push(inertia);
    Ok(KMeansResult {
        assignments,
        centroids,
        inertia,
        inertia_history: history,
        iterations,
    })
}
