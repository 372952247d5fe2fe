//! Binary PGM (`P5`) and PPM (`P6`) with maxval 255.
//!
//! Intensities in `[0, 1]` map to bytes as `floor(255 v + 0.5)` after
//! clamping; bytes map back as `b / 255`. Color input is reduced to gray
//! with Rec. 601 luma weights.

use std::path::Path;

use dfm_core::image::{Image, ImageBuffer};

use crate::format::{FormatError, HeaderReader};

/// `[0, 1]` → byte, rounding half up. NaN maps to 0.
pub fn to_byte(v: f32) -> u8 {
    if v.is_nan() {
        return 0;
    }
    let scaled = (v.clamp(0.0, 1.0) as f64) * 255.0 + 0.5;
    scaled.floor() as u8
}

pub fn from_byte(b: u8) -> f32 {
    b as f32 / 255.0
}

pub fn encode_pgm(img: &ImageBuffer) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.as_slice().iter().map(|&v| to_byte(v)));
    out
}

/// Gray replicated into three channels.
pub fn encode_ppm(img: &ImageBuffer) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    for &v in img.as_slice() {
        let b = to_byte(v);
        out.extend_from_slice(&[b, b, b]);
    }
    out
}

/// Raw bytes and channel count of a P5 or P6 file.
pub fn decode_pnm_bytes(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8]), FormatError> {
    let mut r = HeaderReader::new(bytes);
    let channels = match r.token()? {
        "P5" => 1,
        "P6" => 3,
        other => return Err(FormatError::BadMagic(format!("expected P5 or P6, found {other:?}"))),
    };
    let w = r.dimension()?;
    let h = r.dimension()?;
    let maxval = r.token()?;
    if maxval != "255" {
        return Err(FormatError::BadMagic(format!("unsupported maxval {maxval}")));
    }
    let data = r.payload_after_single_whitespace()?;
    let n = w * h * channels;
    if data.len() < n {
        return Err(FormatError::TruncatedData { expected: n, found: data.len() });
    }
    Ok((w, h, channels, &data[..n]))
}

pub fn decode_pnm(bytes: &[u8]) -> Result<ImageBuffer, FormatError> {
    let (w, h, channels, data) = decode_pnm_bytes(bytes)?;
    let values = if channels == 1 {
        data.iter().map(|&b| from_byte(b)).collect()
    } else {
        data.chunks_exact(3)
            .map(|p| ((0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0) as f32)
            .collect()
    };
    Ok(Image::from_vec(w, h, values).expect("sized from the header"))
}

pub fn write_ppm(path: &Path, img: &ImageBuffer) -> Result<(), FormatError> {
    std::fs::write(path, encode_ppm(img)).map_err(|e| FormatError::io(path, e))
}

pub fn write_pgm(path: &Path, img: &ImageBuffer) -> Result<(), FormatError> {
    std::fs::write(path, encode_pgm(img)).map_err(|e| FormatError::io(path, e))
}
