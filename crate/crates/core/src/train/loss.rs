use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ablation knobs of the contrastive objective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LossVariant {
    /// Subtracted from every positive score before the softmax.
    pub margin: f64,
    /// Weight of the document-anchored InfoNCE term.
    pub doc_penalty: f64,
}

impl LossVariant {
    /// Value used by the margin ablation.
    pub const ABLATION_MARGIN: f64 = 0.01;
    /// Value used by the document-penalty ablation.
    pub const ABLATION_DOC_PENALTY: f64 = 1.0;

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.margin) {
            return Err(Error::InvalidInput(format!("margin {} must be in [0, 1)", self.margin)));
        }
        if !(self.doc_penalty >= 0.0 && self.doc_penalty.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "document penalty {} must be a finite value >= 0",
                self.doc_penalty
            )));
        }
        Ok(())
    }
}

/// Softmax cross-entropy of `logits` against `pos`, and its gradient added
/// into `grad` with weight `w`.
fn cross_entropy(logits: &[f64], pos: usize, w: f64, grad: &mut [f64]) -> f64 {
    let lp = logits[pos];
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let loss = if lp >= max {
        // The positive leads: ln(1 + sum exp(l - lp)) keeps tiny losses exact.
        let rest: f64 = logits
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != pos)
            .map(|(_, l)| (l - lp).exp())
            .sum();
        rest.ln_1p()
    } else {
        max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() - lp
    };
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    for (j, (g, l)) in grad.iter_mut().zip(logits).enumerate() {
        let p = (l - max).exp() / z;
        *g += w * (p - if j == pos { 1.0 } else { 0.0 });
    }
    loss
}

/// InfoNCE over a `q x d` row-major score matrix. Query `i`'s positive sits
/// in column `pos_index[i]`. Returns the mean loss and its gradient with
/// respect to `scores`.
pub fn infonce_loss(
    scores: &[f64],
    q: usize,
    d: usize,
    pos_index: &[usize],
    tau: f64,
    variant: &LossVariant,
) -> Result<(f64, Vec<f64>)> {
    if scores.len() != q * d {
        return Err(Error::Shape(format!("{} scores for a {q}x{d} matrix", scores.len())));
    }
    if pos_index.len() != q {
        return Err(Error::Shape(format!(
            "{} positive indices for {q} queries",
            pos_index.len()
        )));
    }
    if let Some(&p) = pos_index.iter().find(|&&p| p >= d) {
        return Err(Error::InvalidInput(format!("positive column {p} out of {d}")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidInput(format!("temperature {tau} must be positive")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("score matrix".into()));
    }
    if q == 0 {
        return Err(Error::InvalidInput("no queries".into()));
    }
    let inv_q = 1.0 / q as f64;
    let mut grad = vec![0.0; q * d];
    let mut total = 0.0;
    let mut logits = vec![0.0; d];
    let mut g = vec![0.0; d];
    for (i, &p) in pos_index.iter().enumerate() {
        for (j, l) in logits.iter_mut().enumerate() {
            let s = scores[i * d + j] - if j == p { variant.margin } else { 0.0 };
            *l = s / tau;
        }
        g.fill(0.0);
        total += cross_entropy(&logits, p, inv_q / tau, &mut g);
        for (dst, v) in grad[i * d..(i + 1) * d].iter_mut().zip(&g) {
            *dst += v;
        }
    }
    let mut loss = total * inv_q;

    if variant.doc_penalty > 0.0 {
        let w = variant.doc_penalty * inv_q;
        let mut logits = vec![0.0; q];
        let mut g = vec![0.0; q];
        let mut sym = 0.0;
        for (i, &p) in pos_index.iter().enumerate() {
            for (k, l) in logits.iter_mut().enumerate() {
                let s = scores[k * d + p] - if k == i { variant.margin } else { 0.0 };
                *l = s / tau;
            }
            g.fill(0.0);
            sym += cross_entropy(&logits, i, w / tau, &mut g);
            for (k, v) in g.iter().enumerate() {
                grad[k * d + p] += v;
            }
        }
        loss += variant.doc_penalty * sym * inv_q;
    }
    Ok((loss, grad))
}
