//! IDX container: two zero bytes, a type byte (only `0x08`, unsigned byte,
//! is supported), a rank byte, `rank` big-endian `u32` dimension sizes, then
//! the payload.
//!
//! Rank 1 loads as scalar samples, rank 2 as vectors, rank 3 as grey images
//! (`1×H×W`), rank 4 as `C×H×W` images. Payload bytes are scaled to `[0, 1]`.

use std::path::Path;

use thiserror::Error;

use super::DataBatch;
use crate::{Error, Result};

const UBYTE: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IdxError {
    #[error("bad IDX magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported IDX element type 0x{0:02x}")]
    UnsupportedType(u8),
    #[error("unsupported IDX rank {0}")]
    UnsupportedRank(u8),
    #[error("IDX header truncated: need {expected} bytes, file has {actual}")]
    HeaderTruncated { expected: usize, actual: usize },
    #[error("IDX dimensions overflow the address space")]
    DimensionOverflow,
    #[error("IDX dimension of size zero")]
    EmptyDimension,
    #[error("IDX payload length mismatch: expected {expected} bytes, found {actual}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("value {0} cannot be stored as an unsigned byte")]
    NotByteValued(f32),
}

pub fn parse_idx(bytes: &[u8]) -> Result<DataBatch, IdxError> {
    if bytes.len() < 4 {
        return Err(IdxError::HeaderTruncated { expected: 4, actual: bytes.len() });
    }
    let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if magic[0] != 0 || magic[1] != 0 {
        return Err(IdxError::BadMagic(magic));
    }
    if magic[2] != UBYTE {
        return Err(IdxError::UnsupportedType(magic[2]));
    }
    let rank = magic[3];
    if !(1..=4).contains(&rank) {
        return Err(IdxError::UnsupportedRank(rank));
    }
    let header = 4 + 4 * rank as usize;
    if bytes.len() < header {
        return Err(IdxError::HeaderTruncated { expected: header, actual: bytes.len() });
    }
    let dims: Vec<usize> =
        bytes[4..header].chunks_exact(4).map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize).collect();
    if dims.contains(&0) {
        return Err(IdxError::EmptyDimension);
    }
    let expected = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or(IdxError::DimensionOverflow)?;
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(IdxError::PayloadLength { expected, actual: payload.len() });
    }
    let sample_shape = match dims[1..] {
        [] => vec![1],
        [d] => vec![d],
        [h, w] => vec![1, h, w],
        [c, h, w] => vec![c, h, w],
        _ => unreachable!("rank checked above"),
    };
    let data = payload.iter().map(|&b| b as f32 / 255.0).collect();
    Ok(DataBatch::new(sample_shape, data).expect("payload length validated"))
}

pub fn load_idx(path: &Path) -> Result<DataBatch> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_idx(&bytes)?)
}

/// Inverse of [`parse_idx`]. Values must be exact multiples of `1/255`,
/// which is what every image source in this crate produces.
pub fn encode_idx(batch: &DataBatch) -> Result<Vec<u8>, IdxError> {
    let mut dims = vec![batch.len()];
    match batch.sample_shape() {
        [1, h, w] => dims.extend([*h, *w]),
        shape => dims.extend_from_slice(shape),
    }
    let mut out = vec![0, 0, UBYTE, dims.len() as u8];
    for d in &dims {
        let d = u32::try_from(*d).map_err(|_| IdxError::DimensionOverflow)?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    for &v in batch.data() {
        let q = (v * 255.0).round();
        if !(0.0..=255.0).contains(&q) || q / 255.0 != v {
            return Err(IdxError::NotByteValued(v));
        }
        out.push(q as u8);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_noise;
    use crate::rng::seeded;

    fn sample_file() -> Vec<u8> {
        let mut b = vec![0x00, 0x00, 0x08, 0x03];
        for d in [2u32, 4, 4] {
            b.extend_from_slice(&d.to_be_bytes());
        }
        b.extend((0..32u8).map(|i| i * 8));
        b
    }

    #[test]
    fn parses_two_four_by_four_images() {
        let batch = parse_idx(&sample_file()).unwrap();
        assert_eq!(batch.len(), 2);
        assert_eq!(batch.sample_shape(), &[1, 4, 4]);
        assert_eq!(batch.sample(1)[0], 128.0 / 255.0);
    }

    #[test]
    fn truncated_payload_names_lengths() {
        let mut f = sample_file();
        f.pop();
        let err = parse_idx(&f).unwrap_err();
        assert_eq!(err, IdxError::PayloadLength { expected: 32, actual: 31 });
        assert!(err.to_string().contains("expected 32"));
    }

    #[test]
    fn byte_255_is_one() {
        let mut f = vec![0, 0, 8, 1, 0, 0, 0, 1];
        f.push(255);
        assert_eq!(parse_idx(&f).unwrap().data(), &[1.0]);
    }

    #[test]
    fn every_magic_mutation_is_rejected() {
        let good = sample_file();
        for pos in 0..4 {
            for v in 0..=255u8 {
                if v == good[pos] {
                    continue;
                }
                let mut f = good.clone();
                f[pos] = v;
                assert!(parse_idx(&f).is_err(), "byte {pos} = {v:#x} accepted");
            }
        }
    }

    #[test]
    fn overflowing_dimensions_are_rejected() {
        let mut f = vec![0, 0, 8, 4];
        for _ in 0..4 {
            f.extend_from_slice(&u32::MAX.to_be_bytes());
        }
        assert!(matches!(parse_idx(&f), Err(IdxError::DimensionOverflow) | Err(IdxError::PayloadLength { .. })));
        assert!(matches!(parse_idx(&[0, 0]), Err(IdxError::HeaderTruncated { .. })));
    }

    #[test]
    fn rgb_round_trip() {
        let batch = gen_noise(3, &[3, 5, 4], &mut seeded(11)).unwrap();
        let bytes = encode_idx(&batch).unwrap();
        assert_eq!(&bytes[..4], &[0, 0, 8, 4]);
        assert_eq!(parse_idx(&bytes).unwrap(), batch);
    }

    #[test]
    fn non_byte_values_refuse_to_encode() {
        let b = DataBatch::new(vec![2], vec![0.1234, 0.5]).unwrap();
        assert!(matches!(encode_idx(&b), Err(IdxError::NotByteValued(_))));
    }
}
