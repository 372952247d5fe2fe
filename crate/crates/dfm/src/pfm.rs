//! Single-channel PFM: `Pf` header, rows stored bottom to top, f32
//! samples. Written little-endian (scale `-1.0`); both byte orders are
//! read.

use std::io::Write;

use dfm_core::image::Image;

use crate::format::{FormatError, HeaderReader};

pub fn encode_pfm(img: &Image<f32>) -> Vec<u8> {
    let (w, h) = (img.width(), img.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for v in img.row(y) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Image<f32>, FormatError> {
    let mut r = HeaderReader::new(bytes);
    let magic = r.token()?;
    if magic != "Pf" {
        return Err(FormatError::BadMagic(format!("expected Pf, found {magic:?}")));
    }
    let w = r.dimension()?;
    let h = r.dimension()?;
    let scale: f64 = r.token()?.parse().map_err(|_| FormatError::BadHeader("scale is not a number".into()))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(FormatError::BadHeader("scale must be non-zero".into()));
    }
    let data = r.payload_after_single_whitespace()?;
    let n = w.checked_mul(h).and_then(|n| n.checked_mul(4)).ok_or(FormatError::BadHeader("image too large".into()))?;
    if data.len() < n {
        return Err(FormatError::TruncatedData { expected: n, found: data.len() });
    }
    let little = scale < 0.0;
    let mut values = vec![0.0f32; w * h];
    for (k, chunk) in data[..n].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row, x) = (k / w, k % w);
        values[(h - 1 - row) * w + x] = v;
    }
    Ok(Image::from_vec(w, h, values).expect("sized from the header"))
}

pub fn write_pfm(path: &std::path::Path, img: &Image<f32>) -> Result<(), FormatError> {
    let mut f = std::fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    f.write_all(&encode_pfm(img)).map_err(|e| FormatError::io(path, e))
}

pub fn read_pfm(path: &std::path::Path) -> Result<Image<f32>, FormatError> {
    decode_pfm(&std::fs::read(path).map_err(|e| FormatError::io(path, e))?)
}
