//! One-layer toy encoder with hand-derived gradients.
//!
//! For a text with content-token rows `x_1..x_m` of the token table `E`:
//!
//! * CLS pooling: `h = tanh(W c + b)` with `c = mean(x_i)` (`c = 0` when `m = 0`)
//! * Mean pooling: `h = mean_i tanh(W x_i + b)`, falling back to the CLS
//!   formula when `m = 0`
//!
//! and the output row is `h / |h|`, or `e_1` when `|h| < 1e-12`.

use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tokenizer::tokenize;
use super::{dot, Embedder, EmbeddingMatrix};
use crate::data::{apply_prefix, PrefixKind};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

pub const DEFAULT_VOCAB: usize = 4096;
pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_MAX_TOKENS: usize = 512;

const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Cls,
    Mean,
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cls" => Ok(Pooling::Cls),
            "mean" => Ok(Pooling::Mean),
            _ => Err(Error::InvalidInput(format!("unknown pooling `{s}`"))),
        }
    }
}

/// Parameters of the toy encoder. The same shape doubles as the gradient
/// container.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyParams {
    pub vocab_size: usize,
    pub dim: usize,
    /// Token table `E`, `vocab_size x dim`, row-major.
    pub table: Vec<f64>,
    /// Mixing matrix `W`, `dim x dim`, row-major.
    pub mixing: Vec<f64>,
    /// Bias `b`, length `dim`.
    pub bias: Vec<f64>,
}

impl ToyParams {
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        Self {
            vocab_size,
            dim,
            table: vec![0.0; vocab_size * dim],
            mixing: vec![0.0; dim * dim],
            bias: vec![0.0; dim],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.vocab_size, self.dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 || self.dim < 1 {
            return Err(Error::Shape(format!(
                "vocab_size {} / dim {} out of range",
                self.vocab_size, self.dim
            )));
        }
        if self.table.len() != self.vocab_size * self.dim
            || self.mixing.len() != self.dim * self.dim
            || self.bias.len() != self.dim
        {
            return Err(Error::Shape("parameter buffers disagree with (V, d)".into()));
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("toy parameters".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    pub fn same_shape(&self, other: &ToyParams) -> bool {
        self.vocab_size == other.vocab_size && self.dim == other.dim
    }

    pub fn slices(&self) -> [&[f64]; 3] {
        [&self.table, &self.mixing, &self.bias]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 3] {
        [&mut self.table, &mut self.mixing, &mut self.bias]
    }

    pub fn num_params(&self) -> usize {
        self.table.len() + self.mixing.len() + self.bias.len()
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, other: &ToyParams, alpha: f64) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    /// Flat view index -> mutable entry, used by finite-difference checks.
    pub fn get_flat(&self, i: usize) -> f64 {
        let [e, w, b] = self.slices();
        if i < e.len() {
            e[i]
        } else if i < e.len() + w.len() {
            w[i - e.len()]
        } else {
            b[i - e.len() - w.len()]
        }
    }

    pub fn set_flat(&mut self, i: usize, v: f64) {
        let (el, wl) = (self.table.len(), self.mixing.len());
        if i < el {
            self.table[i] = v;
        } else if i < el + wl {
            self.mixing[i - el] = v;
        } else {
            self.bias[i - el - wl] = v;
        }
    }

    fn token_row(&self, id: usize) -> &[f64] {
        &self.table[id * self.dim..(id + 1) * self.dim]
    }

    /// `W v + b`.
    fn affine(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| dot(&self.mixing[i * d..(i + 1) * d], v) + self.bias[i])
            .collect()
    }

    /// `W^T g`.
    fn affine_transpose(&self, g: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for (i, gi) in g.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(&self.mixing[i * d..(i + 1) * d]) {
                *o += w * gi;
            }
        }
        out
    }
}

/// Draws parameters from named streams of the seed: table ~ U(-0.05, 0.05),
/// mixing ~ N(0, 1/d) (variance), bias ~ U(-0.01, 0.01).
pub fn init_params(seed: u64, vocab_size: usize, dim: usize) -> ToyParams {
    assert!(vocab_size >= 2 && dim >= 1, "need V >= 2 and d >= 1");
    let mut p = ToyParams::zeros(vocab_size, dim);
    let table_dist = Uniform::new(-0.05, 0.05).expect("valid range");
    let mut rng = stream_rng(seed, 1);
    p.table.iter_mut().for_each(|x| *x = table_dist.sample(&mut rng));
    let mix_dist = Normal::new(0.0, (1.0 / dim as f64).sqrt()).expect("valid std");
    let mut rng = stream_rng(seed, 2);
    p.mixing.iter_mut().for_each(|x| *x = mix_dist.sample(&mut rng));
    let bias_dist = Uniform::new(-0.01, 0.01).expect("valid range");
    let mut rng = stream_rng(seed, 3);
    p.bias.iter_mut().for_each(|x| *x = bias_dist.sample(&mut rng));
    p
}

/// Forward intermediates of one text.
#[derive(Debug, Clone)]
pub(crate) struct Encoded {
    pub y: Vec<f64>,
    norm: f64,
    fallback: bool,
    /// Pooled pre-normalization vector `h`.
    h: Vec<f64>,
    /// CLS path: the mean content vector `c`.
    context: Vec<f64>,
    /// Mean path: per-token `tanh(W x_i + b)`.
    token_h: Vec<Vec<f64>>,
}

fn content(tokens: &[usize]) -> &[usize] {
    tokens.get(1..).unwrap_or(&[])
}

pub(crate) fn encode_tokens(params: &ToyParams, tokens: &[usize], pooling: Pooling) -> Encoded {
    let d = params.dim;
    let ids = content(tokens);
    let m = ids.len();
    let (h, context, token_h) = match pooling {
        Pooling::Mean if m > 0 => {
            let token_h: Vec<Vec<f64>> = ids
                .iter()
                .map(|&id| params.affine(params.token_row(id)).into_iter().map(f64::tanh).collect())
                .collect();
            let mut h = vec![0.0; d];
            for th in &token_h {
                for (a, v) in h.iter_mut().zip(th) {
                    *a += v;
                }
            }
            h.iter_mut().for_each(|a| *a /= m as f64);
            (h, Vec::new(), token_h)
        }
        _ => {
            let mut c = vec![0.0; d];
            for &id in ids {
                for (a, v) in c.iter_mut().zip(params.token_row(id)) {
                    *a += v;
                }
            }
            if m > 0 {
                c.iter_mut().for_each(|a| *a /= m as f64);
            }
            let h: Vec<f64> = params.affine(&c).into_iter().map(f64::tanh).collect();
            (h, c, Vec::new())
        }
    };
    let norm = dot(&h, &h).sqrt();
    let fallback = norm.is_nan() || norm < NORM_FLOOR;
    let y = if fallback {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        e
    } else {
        h.iter().map(|v| v / norm).collect()
    };
    Encoded {
        y,
        norm,
        fallback,
        h,
        context,
        token_h,
    }
}

/// Accumulates `d<gy, y>/dparams` for one text into `grads`.
pub(crate) fn backprop_tokens(
    params: &ToyParams,
    tokens: &[usize],
    pooling: Pooling,
    enc: &Encoded,
    gy: &[f64],
    grads: &mut ToyParams,
) {
    if enc.fallback {
        return;
    }
    let d = params.dim;
    let ids = content(tokens);
    let m = ids.len();
    // Through the normalization: (I - y y^T) gy / |h|.
    let proj = dot(&enc.y, gy);
    let gh: Vec<f64> = gy.iter().zip(&enc.y).map(|(g, y)| (g - y * proj) / enc.norm).collect();
    match pooling {
        Pooling::Mean if m > 0 => {
            let inv_m = 1.0 / m as f64;
            for (&id, th) in ids.iter().zip(&enc.token_h) {
                let gz: Vec<f64> = gh.iter().zip(th).map(|(g, t)| g * inv_m * (1.0 - t * t)).collect();
                accumulate_affine(params, grads, &gz, params.token_row(id));
                let gx = params.affine_transpose(&gz);
                let row = &mut grads.table[id * d..(id + 1) * d];
                for (r, g) in row.iter_mut().zip(&gx) {
                    *r += g;
                }
            }
        }
        _ => {
            let gz: Vec<f64> = gh.iter().zip(&enc.h).map(|(g, t)| g * (1.0 - t * t)).collect();
            accumulate_affine(params, grads, &gz, &enc.context);
            if m > 0 {
                let gc = params.affine_transpose(&gz);
                let inv_m = 1.0 / m as f64;
                for &id in ids {
                    let row = &mut grads.table[id * d..(id + 1) * d];
                    for (r, g) in row.iter_mut().zip(&gc) {
                        *r += g * inv_m;
                    }
                }
            }
        }
    }
}

/// `gW += gz x^T`, `gb += gz`.
fn accumulate_affine(params: &ToyParams, grads: &mut ToyParams, gz: &[f64], x: &[f64]) {
    let d = params.dim;
    for (i, g) in gz.iter().enumerate() {
        grads.bias[i] += g;
        for (w, xv) in grads.mixing[i * d..(i + 1) * d].iter_mut().zip(x) {
            *w += g * xv;
        }
    }
}

/// Forward pass over many token sequences, keeping what the backward pass needs.
pub(crate) struct BatchForward {
    pub tokens: Vec<Vec<usize>>,
    pub encoded: Vec<Encoded>,
    pub pooling: Pooling,
}

impl BatchForward {
    pub fn run(params: &ToyParams, tokens: Vec<Vec<usize>>, pooling: Pooling) -> Self {
        let encoded = tokens.par_iter().map(|t| encode_tokens(params, t, pooling)).collect();
        Self {
            tokens,
            encoded,
            pooling,
        }
    }

    /// Adds `d<upstream, Y>/dparams` to `grads`, texts in order.
    pub fn backward(&self, params: &ToyParams, upstream: &[f64], grads: &mut ToyParams) {
        let d = params.dim;
        for (i, (t, e)) in self.tokens.iter().zip(&self.encoded).enumerate() {
            backprop_tokens(params, t, self.pooling, e, &upstream[i * d..(i + 1) * d], grads);
        }
    }

    pub fn into_matrix(self, dim: usize) -> EmbeddingMatrix {
        let n = self.encoded.len();
        let data = self.encoded.into_iter().flat_map(|e| e.y).collect();
        EmbeddingMatrix::from_normalized(n, dim, data).expect("toy rows are unit norm")
    }
}

pub(crate) fn tokenize_all(texts: &[String], prefix: PrefixKind, vocab_size: usize, max_len: usize) -> Vec<Vec<usize>> {
    texts
        .iter()
        .map(|t| tokenize(&apply_prefix(prefix, t), vocab_size, max_len))
        .collect()
}

/// Embeds `texts` (prefix applied first) into unit rows.
pub fn embed_batch(
    params: &ToyParams,
    texts: &[String],
    pooling: Pooling,
    prefix: PrefixKind,
) -> Result<EmbeddingMatrix> {
    params.validate()?;
    let tokens = tokenize_all(texts, prefix, params.vocab_size, DEFAULT_MAX_TOKENS);
    Ok(BatchForward::run(params, tokens, pooling).into_matrix(params.dim))
}

/// Gradient of `<upstream, embed_batch(params, texts, pooling, prefix)>` with
/// respect to every parameter. `upstream` is `n x d`, row-major.
pub fn embed_backward(
    params: &ToyParams,
    texts: &[String],
    pooling: Pooling,
    prefix: PrefixKind,
    upstream: &[f64],
) -> Result<ToyParams> {
    params.validate()?;
    if upstream.len() != texts.len() * params.dim {
        return Err(Error::Shape(format!(
            "upstream has {} values, expected {}x{}",
            upstream.len(),
            texts.len(),
            params.dim
        )));
    }
    let tokens = tokenize_all(texts, prefix, params.vocab_size, DEFAULT_MAX_TOKENS);
    let fwd = BatchForward::run(params, tokens, pooling);
    let mut grads = params.zeros_like();
    fwd.backward(params, upstream, &mut grads);
    Ok(grads)
}

/// The toy encoder bound to a pooling mode, usable wherever an [`Embedder`]
/// is expected.
#[derive(Debug, Clone)]
pub struct ToyEmbedder {
    pub params: ToyParams,
    pub pooling: Pooling,
    pub max_tokens: usize,
}

impl ToyEmbedder {
    pub fn new(params: ToyParams, pooling: Pooling) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            pooling,
            max_tokens: DEFAULT_MAX_TOKENS,
        })
    }
}

impl Embedder for ToyEmbedder {
    fn embed(&self, texts: &[String], prefix: PrefixKind) -> Result<EmbeddingMatrix> {
        let tokens = tokenize_all(texts, prefix, self.params.vocab_size, self.max_tokens);
        Ok(BatchForward::run(&self.params, tokens, self.pooling).into_matrix(self.params.dim))
    }
}
