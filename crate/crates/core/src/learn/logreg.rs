//! Multinomial logistic regression by full-batch gradient descent with an
//! Armijo backtracking line search.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::check_rows;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegOptions {
    pub max_iter: usize,
    pub l2: f64,
    pub tol: f64,
}

impl Default for LogRegOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            l2: 1.0,
            tol: 1e-4,
        }
    }
}

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel<L> {
    /// `C x (d + 1)`, row-major, bias in the last column.
    pub weights: Vec<f64>,
    pub classes: Vec<L>,
    pub dim: usize,
    /// Objective at initialization and after every accepted step.
    pub loss_history: Vec<f64>,
}

struct Problem<'a> {
    x: &'a [Vec<f64>],
    y: Vec<usize>,
    classes: usize,
    dim: usize,
    l2: f64,
}

impl Problem<'_> {
    fn stride(&self) -> usize {
        self.dim + 1
    }

    fn logits(&self, w: &[f64], row: &[f64]) -> Vec<f64> {
        logits(w, self.classes, self.dim, row)
    }

    fn loss(&self, w: &[f64]) -> f64 {
        let n = self.x.len() as f64;
        let mut ce = 0.0;
        for (row, &yi) in self.x.iter().zip(&self.y) {
            let z = self.logits(w, row);
            ce += log_sum_exp(&z) - z[yi];
        }
        ce / n + self.l2 / (2.0 * n) * self.penalty(w)
    }

    fn penalty(&self, w: &[f64]) -> f64 {
        let s = self.stride();
        (0..self.classes)
            .map(|c| w[c * s..c * s + self.dim].iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let n = self.x.len() as f64;
        let s = self.stride();
        let mut g = vec![0.0; w.len()];
        for (row, &yi) in self.x.iter().zip(&self.y) {
            let p = softmax(&self.logits(w, row));
            for c in 0..self.classes {
                let err = p[c] - if c == yi { 1.0 } else { 0.0 };
                let gc = &mut g[c * s..(c + 1) * s];
                for (gj, xj) in gc.iter_mut().zip(row) {
                    *gj += err * xj;
                }
                gc[self.dim] += err;
            }
        }
        for c in 0..self.classes {
            for j in 0..s {
                g[c * s + j] /= n;
                if j < self.dim {
                    g[c * s + j] += self.l2 / n * w[c * s + j];
                }
            }
        }
        g
    }
}

fn logits(w: &[f64], classes: usize, dim: usize, row: &[f64]) -> Vec<f64> {
    let s = dim + 1;
    (0..classes)
        .map(|c| {
            let wc = &w[c * s..(c + 1) * s];
            wc[..dim].iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + wc[dim]
        })
        .collect()
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Fits weights from zero. Classes are the sorted distinct labels of `y`.
pub fn fit_logreg<L: Ord + Clone>(x: &[Vec<f64>], y: &[L], opts: &LogRegOptions) -> Result<LogRegModel<L>> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} rows vs {} labels", x.len(), y.len())));
    }
    let dim = check_rows(x)?;
    let classes: Vec<L> = y.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(Error::InvalidInput(
            "logistic regression needs at least 2 classes".into(),
        ));
    }
    let yi = y
        .iter()
        .map(|l| classes.binary_search(l).expect("label drawn from classes"))
        .collect();
    let problem = Problem {
        x,
        y: yi,
        classes: classes.len(),
        dim,
        l2: opts.l2,
    };
    let mut w = vec![0.0; classes.len() * (dim + 1)];
    let mut f = problem.loss(&w);
    let mut history = vec![f];
    for _ in 0..opts.max_iter {
        let g = problem.gradient(&w);
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < opts.tol {
            break;
        }
        let g2: f64 = g.iter().map(|v| v * v).sum();
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let fc = problem.loss(&cand);
            if fc <= f - ARMIJO_C * step * g2 {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc)) = accepted else { break };
        w = cand;
        f = fc;
        history.push(f);
    }
    Ok(LogRegModel {
        weights: w,
        classes,
        dim,
        loss_history: history,
    })
}

impl<L: Clone> LogRegModel<L> {
    fn check_dim(&self, x: &[Vec<f64>]) -> Result<()> {
        if let Some((i, r)) = x.iter().enumerate().find(|(_, r)| r.len() != self.dim) {
            return Err(Error::Shape(format!(
                "row {i} has {} features, model expects {}",
                r.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Class probabilities per row, columns in `classes` order.
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check_dim(x)?;
        Ok(x.iter()
            .map(|r| softmax(&logits(&self.weights, self.classes.len(), self.dim, r)))
            .collect())
    }

    /// Argmax class per row; ties go to the earlier class.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<L>> {
        self.check_dim(x)?;
        Ok(x.iter()
            .map(|r| {
                let z = logits(&self.weights, self.classes.len(), self.dim, r);
                let mut best = 0;
                for (c, v) in z.iter().enumerate().skip(1) {
                    if *v > z[best] {
                        best = c;
                    }
                }
                self.classes[best].clone()
            })
            .collect())
    }
}
