//! Binary feature record: magic `MFCC`, version `u16`, rows `u32`, cols
//! `u32`, then `rows * cols` little-endian `f64` values in row-major order.

use std::io::{Read, Write};

use thiserror::Error;

use super::MfccFeatures;

pub const CACHE_MAGIC: [u8; 4] = *b"MFCC";
pub const CACHE_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum FeatureCacheError {
    #[error("not a feature record (bad magic)")]
    BadMagic,
    #[error("unsupported feature record version {0}")]
    Version(u16),
    #[error("feature record I/O: {0}")]
    Io(#[from] std::io::Error),
}

pub fn write_features<W: Write>(mut w: W, features: &MfccFeatures) -> Result<(), FeatureCacheError> {
    let mut buf = Vec::with_capacity(14 + features.data.len() * 8);
    buf.extend_from_slice(&CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(features.frames as u32).to_le_bytes());
    buf.extend_from_slice(&(features.coeffs as u32).to_le_bytes());
    for v in &features.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_features<R: Read>(mut r: R) -> Result<MfccFeatures, FeatureCacheError> {
    let mut head = [0u8; 14];
    r.read_exact(&mut head)?;
    if head[..4] != CACHE_MAGIC {
        return Err(FeatureCacheError::BadMagic);
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != CACHE_VERSION {
        return Err(FeatureCacheError::Version(version));
    }
    let rows = u32::from_le_bytes(head[6..10].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(head[10..14].try_into().unwrap()) as usize;
    let mut payload = vec![0u8; rows * cols * 8];
    r.read_exact(&mut payload)?;
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut f = MfccFeatures {
        frames: rows,
        coeffs: cols,
        data,
        pooled: None,
        clip_id: None,
    };
    f.pooled = Some(f.time_mean());
    Ok(f)
}
