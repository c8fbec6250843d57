//! Model checkpoints.
//!
//! Layout, all integers little-endian `u32`:
//! `"LN5W"`, format version, then for each tensor in layer order its rank,
//! its dims, and the raw little-endian `f32` values.

use std::io::Write;

use thiserror::Error;

use crate::lenet::{LeNetModel, Params, NUM_TENSORS, SHAPES};

pub const MAGIC: &[u8; 4] = b"LN5W";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("wrong magic: expected LN5W, found {0:?}")]
    WrongMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("tensor {tensor}: expected dims {expected:?}, found {found:?}")]
    ShapeMismatch {
        tensor: usize,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("{0} trailing bytes after the last tensor")]
    TrailingBytes(usize),
}

pub fn encode(model: &LeNetModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * model.params.len() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (tensor, shape) in model.params.tensors().iter().zip(SHAPES) {
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in tensor.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_checkpoint<W: Write>(model: &LeNetModel, sink: &mut W) -> std::io::Result<()> {
    sink.write_all(&encode(model))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CheckpointError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(CheckpointError::Truncated(self.bytes.len()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode(bytes: &[u8]) -> Result<LeNetModel, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(CheckpointError::WrongMagic([
            magic[0], magic[1], magic[2], magic[3],
        ]));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let mut tensors = Vec::with_capacity(NUM_TENSORS);
    for (i, shape) in SHAPES.iter().enumerate() {
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(CheckpointError::ShapeMismatch {
                tensor: i,
                expected: shape.to_vec(),
                found: vec![rank],
            });
        }
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if dims != *shape {
            return Err(CheckpointError::ShapeMismatch {
                tensor: i,
                expected: shape.to_vec(),
                found: dims,
            });
        }
        let n: usize = dims.iter().product();
        let raw = r.take(4 * n)?;
        tensors.push(
            raw.chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
        );
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(LeNetModel {
        params: Params::from_tensors(tensors).expect("shapes checked"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = LeNetModel::init(42);
        let bytes = encode(&m);
        let header: usize = SHAPES.iter().map(|s| 4 + 4 * s.len()).sum();
        assert_eq!(bytes.len(), 8 + header + 4 * 44_426);
        assert_eq!(&bytes[..4], b"LN5W");
        assert_eq!(decode(&bytes).unwrap(), m);
    }

    #[test]
    fn corrupt_inputs() {
        let mut bytes = encode(&LeNetModel::init(1));
        assert_eq!(decode(&bytes[..10]), Err(CheckpointError::Truncated(10)));
        let mut longer = bytes.clone();
        longer.push(0);
        assert_eq!(decode(&longer), Err(CheckpointError::TrailingBytes(1)));
        bytes[4] = 9;
        assert_eq!(decode(&bytes), Err(CheckpointError::UnsupportedVersion(9)));
        bytes[0] = b'X';
        assert_eq!(decode(&bytes), Err(CheckpointError::WrongMagic(*b"XN5W")));
    }

    #[test]
    fn shape_mismatch_detected() {
        let mut bytes = encode(&LeNetModel::init(1));
        // First dim of the first tensor sits right after magic, version, rank.
        bytes[12] = 7;
        assert!(matches!(
            decode(&bytes),
            Err(CheckpointError::ShapeMismatch { tensor: 0, .. })
        ));
    }
}
