//! Image inputs by content: PGM/PPM, PNG or PFM.

use std::path::Path;

use dfm_core::image::{Image, ImageBuffer, Mask};

use crate::format::FormatError;
use crate::{pfm, pnm};

const PNG_MAGIC: &[u8] = b"\x89PNG";

/// Grayscale intensities in `[0, 1]` (PFM values are taken as is).
pub fn read_gray(path: &Path) -> Result<ImageBuffer, FormatError> {
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    if bytes.starts_with(b"Pf") {
        pfm::decode_pfm(&bytes)
    } else if bytes.starts_with(PNG_MAGIC) {
        let img = decode_png(&bytes)?.to_luma16();
        let (w, h) = img.dimensions();
        let values = img.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect();
        Ok(Image::from_vec(w as usize, h as usize, values).expect("sized by the decoder"))
    } else {
        pnm::decode_pnm(&bytes)
    }
}

/// Raw integer samples; used for masks and object label maps.
pub fn read_integer_map(path: &Path) -> Result<Image<u32>, FormatError> {
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    if bytes.starts_with(PNG_MAGIC) {
        let img = decode_png(&bytes)?.to_luma16();
        let (w, h) = img.dimensions();
        let values = img.into_raw().into_iter().map(u32::from).collect();
        Ok(Image::from_vec(w as usize, h as usize, values).expect("sized by the decoder"))
    } else {
        let (w, h, channels, data) = pnm::decode_pnm_bytes(&bytes)?;
        let values = data.iter().step_by(channels).map(|&b| u32::from(b)).collect();
        Ok(Image::from_vec(w, h, values).expect("sized from the header"))
    }
}

/// Nonzero samples are set.
pub fn read_mask(path: &Path) -> Result<Mask, FormatError> {
    Ok(read_integer_map(path)?.map(|v| v != 0))
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<(), FormatError> {
    pnm::write_pgm(path, &mask.map(|m| if m { 1.0 } else { 0.0 }))
}

fn decode_png(bytes: &[u8]) -> Result<image::DynamicImage, FormatError> {
    image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| FormatError::BadHeader(format!("png: {e}")))
}
