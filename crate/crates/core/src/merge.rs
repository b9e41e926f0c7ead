//! Named tensor sets and spherical linear interpolation between them.
//!
//! File layout: 8-byte magic `TENSORS1`, tensor count as `u64`, then per
//! tensor the name length and UTF-8 name, the rank and each dimension (all
//! `u64`), and finally the values as `f64`. Everything is little-endian.

use std::fs;
use std::path::Path;

use crate::embed::{decode_checkpoint, encode_checkpoint, l2_norm, ToyParams, CHECKPOINT_MAGIC};
use crate::error::{Error, Result};

pub const TENSOR_SET_MAGIC: &[u8; 8] = b"TENSORS1";

/// Factor for merging a trained model with its starting point.
pub const MERGE_FACTOR: f64 = 0.25;
/// Factor for pulling a fine-tuned model back toward its base.
pub const POST_TRAIN_FACTOR: f64 = 0.1;

/// Below this `sin(omega)` the interpolation falls back to linear.
const MIN_SIN: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape(format!(
                "tensor `{name}` has {} values for shape {shape:?}",
                data.len()
            )));
        }
        Ok(Self { name, shape, data })
    }
}

/// Ordered collection of named tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorSet {
    pub tensors: Vec<Tensor>,
}

impl TensorSet {
    pub fn from_params(p: &ToyParams) -> Self {
        let (v, d) = (p.vocab_size, p.dim);
        Self {
            tensors: vec![
                Tensor {
                    name: "table".into(),
                    shape: vec![v, d],
                    data: p.table.clone(),
                },
                Tensor {
                    name: "mixing".into(),
                    shape: vec![d, d],
                    data: p.mixing.clone(),
                },
                Tensor {
                    name: "bias".into(),
                    shape: vec![d],
                    data: p.bias.clone(),
                },
            ],
        }
    }

    pub fn to_params(&self) -> Result<ToyParams> {
        let names: Vec<&str> = self.tensors.iter().map(|t| t.name.as_str()).collect();
        if names != ["table", "mixing", "bias"] {
            return Err(Error::Shape(format!("tensor set {names:?} is not a toy encoder")));
        }
        let [t, w, b] = [&self.tensors[0], &self.tensors[1], &self.tensors[2]];
        let (v, d) = match t.shape[..] {
            [v, d] => (v, d),
            _ => return Err(Error::Shape("table must be 2-dimensional".into())),
        };
        if w.shape != [d, d] || b.shape != [d] {
            return Err(Error::Shape("mixing/bias shapes do not match the table".into()));
        }
        let p = ToyParams {
            vocab_size: v,
            dim: d,
            table: t.data.clone(),
            mixing: w.data.clone(),
            bias: b.data.clone(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Mergeable means same names, order and shapes.
    pub fn check_mergeable(&self, other: &TensorSet) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::Shape(format!(
                "{} tensors vs {}",
                self.tensors.len(),
                other.tensors.len()
            )));
        }
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            if a.name != b.name || a.shape != b.shape {
                return Err(Error::Shape(format!(
                    "tensor `{}` {:?} does not match `{}` {:?}",
                    a.name, a.shape, b.name, b.shape
                )));
            }
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = TENSOR_SET_MAGIC.to_vec();
        let put = |out: &mut Vec<u8>, x: usize| out.extend_from_slice(&(x as u64).to_le_bytes());
        put(&mut out, self.tensors.len());
        for t in &self.tensors {
            put(&mut out, t.name.len());
            out.extend_from_slice(t.name.as_bytes());
            put(&mut out, t.shape.len());
            for &s in &t.shape {
                put(&mut out, s);
            }
        }
        for t in &self.tensors {
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != TENSOR_SET_MAGIC {
            return Err(malformed("bad magic"));
        }
        let mut cur = Cursor { bytes, pos: 8 };
        let count = cur.size()?;
        let mut header = Vec::new();
        for _ in 0..count {
            let len = cur.size()?;
            let name = std::str::from_utf8(cur.take(len)?)
                .map_err(|_| malformed("name is not UTF-8"))?
                .to_string();
            let rank = cur.size()?;
            let shape = (0..rank).map(|_| cur.size()).collect::<Result<Vec<_>>>()?;
            header.push((name, shape));
        }
        let mut tensors = Vec::with_capacity(header.len());
        for (name, shape) in header {
            let n = shape
                .iter()
                .try_fold(1usize, |a, &s| a.checked_mul(s))
                .and_then(|n| n.checked_mul(8))
                .ok_or_else(|| malformed("shape overflows"))?;
            let data = cur
                .take(n)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push(Tensor { name, shape, data });
        }
        if cur.pos != bytes.len() {
            return Err(malformed("trailing bytes"));
        }
        Ok(Self { tensors })
    }
}

fn malformed(m: &str) -> Error {
    Error::InvalidInput(format!("malformed tensor set: {m}"))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| malformed("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn size(&mut self) -> Result<usize> {
        let b = self.take(8)?;
        usize::try_from(u64::from_le_bytes(b.try_into().expect("8 bytes")))
            .map_err(|_| malformed("size does not fit in memory"))
    }
}

/// A checkpoint on disk: either a toy-encoder checkpoint or a tensor set.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightFile {
    Toy(ToyParams),
    Tensors(TensorSet),
}

impl WeightFile {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(CHECKPOINT_MAGIC) {
            Ok(WeightFile::Toy(decode_checkpoint(&bytes)?))
        } else {
            Ok(WeightFile::Tensors(TensorSet::decode(&bytes)?))
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = match self {
            WeightFile::Toy(p) => encode_checkpoint(p),
            WeightFile::Tensors(t) => t.encode(),
        };
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn tensors(&self) -> TensorSet {
        match self {
            WeightFile::Toy(p) => TensorSet::from_params(p),
            WeightFile::Tensors(t) => t.clone(),
        }
    }

    /// Wraps `set` in the same container kind as `self`.
    pub fn like(&self, set: TensorSet) -> Result<Self> {
        Ok(match self {
            WeightFile::Toy(_) => WeightFile::Toy(set.to_params()?),
            WeightFile::Tensors(_) => WeightFile::Tensors(set),
        })
    }
}

/// Spherical interpolation of two flat vectors.
pub fn slerp(w0: &[f64], w1: &[f64], t: f64) -> Result<Vec<f64>> {
    if w0.len() != w1.len() {
        return Err(Error::Shape(format!("{} vs {} values", w0.len(), w1.len())));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("interpolation factor {t} outside [0, 1]")));
    }
    if w0.iter().chain(w1).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("merge input".into()));
    }
    let (n0, n1) = (l2_norm(w0), l2_norm(w1));
    if n0 == 0.0 || n1 == 0.0 {
        return Err(Error::InvalidInput("cannot interpolate a zero-norm tensor".into()));
    }
    if t == 0.0 {
        return Ok(w0.to_vec());
    }
    if t == 1.0 {
        return Ok(w1.to_vec());
    }
    let cos = (crate::embed::dot(w0, w1) / (n0 * n1)).clamp(-1.0, 1.0);
    let omega = cos.acos();
    let sin = omega.sin();
    if sin < MIN_SIN {
        return Ok(w0.iter().zip(w1).map(|(a, b)| a + t * (b - a)).collect());
    }
    let s0 = ((1.0 - t) * omega).sin() / sin;
    let s1 = (t * omega).sin() / sin;
    Ok(w0.iter().zip(w1).map(|(a, b)| s0 * a + s1 * b).collect())
}

/// Interpolates every tensor of `w0` toward its counterpart in `w1`.
pub fn slerp_merge(w0: &TensorSet, w1: &TensorSet, t: f64) -> Result<TensorSet> {
    w0.check_mergeable(w1)?;
    let tensors = w0
        .tensors
        .iter()
        .zip(&w1.tensors)
        .map(|(a, b)| {
            let data =
                slerp(&a.data, &b.data, t).map_err(|e| Error::InvalidInput(format!("tensor `{}`: {e}", a.name)))?;
            Ok(Tensor {
                name: a.name.clone(),
                shape: a.shape.clone(),
                data,
            })
        })
        .collect::<Result<_>>()?;
    Ok(TensorSet { tensors })
}
