//! Binary parameter checkpoints.
//!
//! Layout: 8-byte magic `TOYEMB1\0`, then `V` and `d` as little-endian `u64`,
//! then `E`, `W`, `b` as little-endian `f64` in row-major order.

use std::fs;
use std::path::Path;

use super::toy::ToyParams;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TOYEMB1\0";

pub fn encode_checkpoint(params: &ToyParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * params.num_params());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(params.vocab_size as u64).to_le_bytes());
    out.extend_from_slice(&(params.dim as u64).to_le_bytes());
    for s in params.slices() {
        for x in s {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ToyParams> {
    if bytes.len() < 24 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::InvalidInput("not a toy checkpoint (bad magic)".into()));
    }
    let read_u64 = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let vocab = usize::try_from(read_u64(8)).map_err(|_| Error::Shape("vocab too large".into()))?;
    let dim = usize::try_from(read_u64(16)).map_err(|_| Error::Shape("dim too large".into()))?;
    let count = vocab
        .checked_mul(dim)
        .and_then(|e| dim.checked_mul(dim).and_then(|w| e.checked_add(w)))
        .and_then(|n| n.checked_add(dim))
        .ok_or_else(|| Error::Shape("checkpoint dimensions overflow".into()))?;
    let body = &bytes[24..];
    if body.len() != count * 8 {
        return Err(Error::Shape(format!(
            "checkpoint body has {} bytes, expected {}",
            body.len(),
            count * 8
        )));
    }
    let mut floats = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut p = ToyParams::zeros(vocab, dim);
    for s in p.slices_mut() {
        for x in s.iter_mut() {
            *x = floats.next().expect("length checked");
        }
    }
    p.validate()?;
    Ok(p)
}

pub fn write_checkpoint(path: &Path, params: &ToyParams) -> Result<()> {
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<ToyParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::init_params;

    #[test]
    fn header_layout() {
        let p = init_params(1, 5, 2);
        let bytes = encode_checkpoint(&p);
        assert_eq!(&bytes[..8], b"TOYEMB1\0");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 5);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 24 + 8 * (10 + 4 + 2));
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), p.table[0]);
    }

    #[test]
    fn file_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let p = init_params(9, 40, 7);
        write_checkpoint(&path, &p).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap(), p);
    }

    #[test]
    fn truncated_checkpoint_rejected() {
        let mut bytes = encode_checkpoint(&init_params(1, 5, 2));
        bytes.pop();
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Shape(_))));
        assert!(decode_checkpoint(b"garbage").is_err());
    }
}
