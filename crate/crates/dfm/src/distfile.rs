//! Depth distribution files.
//!
//! Layout, all little-endian:
//!
//! | offset | size | content |
//! |---|---|---|
//! | 0 | 8 | magic `DFMDIST1` |
//! | 8 | 4 | width (u32) |
//! | 12 | 4 | height (u32) |
//! | 16 | 4 | bin count (u32) |
//! | 20 | 8 | first bin depth `d_min` (f64) |
//! | 28 | 8 | bin spacing `Δd` (f64) |
//! | 36 | 4·w·h·count | probabilities (f32), pixel-major, bins innermost |
//!
//! Invalid pixels are stored as all zeros.

use std::path::Path;

use dfm_core::plane_sweep::{DepthDistribution, DepthLevels};

use crate::format::FormatError;

pub const MAGIC: &[u8; 8] = b"DFMDIST1";
const HEADER: usize = 36;

pub fn encode_distribution(dist: &DepthDistribution) -> Vec<u8> {
    let l = dist.levels();
    let mut out = Vec::with_capacity(HEADER + 4 * dist.probabilities().len());
    out.extend_from_slice(MAGIC);
    for v in [dist.width(), dist.height(), l.count()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&l.d_min().to_le_bytes());
    out.extend_from_slice(&l.step().to_le_bytes());
    for &p in dist.probabilities() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_distribution(bytes: &[u8]) -> Result<DepthDistribution, FormatError> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(FormatError::BadMagic("expected DFMDIST1".into()));
    }
    if bytes.len() < HEADER {
        return Err(FormatError::TruncatedData { expected: HEADER, found: bytes.len() });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let (w, h, l) = (u32_at(8), u32_at(12), u32_at(16));
    let levels = DepthLevels::new(f64_at(20), f64_at(28), l).map_err(|e| FormatError::BadHeader(e.to_string()))?;
    if w == 0 || h == 0 {
        return Err(FormatError::BadHeader("empty grid".into()));
    }
    let n = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(l))
        .and_then(|n| n.checked_mul(4))
        .ok_or(FormatError::BadHeader("grid too large".into()))?;
    let body = &bytes[HEADER..];
    if body.len() < n {
        return Err(FormatError::TruncatedData { expected: HEADER + n, found: bytes.len() });
    }
    let probs = body[..n].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    DepthDistribution::from_probabilities(w, h, levels, probs)
        .ok_or(FormatError::BadHeader("probabilities must be finite and non-negative".into()))
}

pub fn write_distribution(path: &Path, dist: &DepthDistribution) -> Result<(), FormatError> {
    std::fs::write(path, encode_distribution(dist)).map_err(|e| FormatError::io(path, e))
}

pub fn read_distribution(path: &Path) -> Result<DepthDistribution, FormatError> {
    decode_distribution(&std::fs::read(path).map_err(|e| FormatError::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DepthDistribution {
        let levels = DepthLevels::new(2.0, 0.5, 3).unwrap();
        DepthDistribution::from_weights(2, 1, levels, vec![1.0, 2.0, 1.0, 0.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn round_trip() {
        let d = sample();
        let bytes = encode_distribution(&d);
        assert_eq!(bytes.len(), 36 + 24);
        let back = decode_distribution(&bytes).unwrap();
        assert_eq!(back, d);
        assert!(!back.is_valid(1, 0));
    }

    #[test]
    fn rejections() {
        let bytes = encode_distribution(&sample());
        assert!(matches!(decode_distribution(b"DFMDIST2"), Err(FormatError::BadMagic(_))));
        assert!(matches!(decode_distribution(&bytes[..20]), Err(FormatError::TruncatedData { .. })));
        assert!(matches!(decode_distribution(&bytes[..bytes.len() - 1]), Err(FormatError::TruncatedData { .. })));
        let mut nan = bytes.clone();
        nan[36..40].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_distribution(&nan), Err(FormatError::BadHeader(_))));
    }
}
