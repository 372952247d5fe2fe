//! Raw voxel and BEV grids with a JSON sidecar.
//!
//! The binary holds little-endian f32 values in the order the header's
//! `layout` names, outermost axis first. Unoccupied voxels are NaN.

use std::path::{Path, PathBuf};

use dfm_core::voxel::{BevMap, VoxelGrid, VoxelGridSpec};
use serde::{Deserialize, Serialize};

use crate::format::FormatError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub format: String,
    pub layout: String,
    /// Extent along each axis of `layout`.
    pub shape: Vec<usize>,
    pub spec: VoxelGridSpec,
    pub occupied: Option<usize>,
    pub data: String,
}

fn sidecar(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

fn write_pair(bin: &Path, header: &GridHeader, values: impl Iterator<Item = f32>) -> Result<(), FormatError> {
    let bytes: Vec<u8> = values.flat_map(f32::to_le_bytes).collect();
    std::fs::write(bin, bytes).map_err(|e| FormatError::io(bin, e))?;
    let json = serde_json::to_string_pretty(header).expect("header serializes");
    let path = sidecar(bin);
    std::fs::write(&path, json + "\n").map_err(|e| FormatError::io(&path, e))
}

/// Writes `bin` and `bin` with a `.json` extension.
pub fn write_voxel_grid(bin: &Path, grid: &VoxelGrid) -> Result<(), FormatError> {
    let (nx, ny, nz) = grid.dims();
    let header = GridHeader {
        format: "f32le".into(),
        layout: "z,y,x".into(),
        shape: vec![nz, ny, nx],
        spec: *grid.spec(),
        occupied: Some(grid.occupied_count()),
        data: file_name(bin),
    };
    let values = grid.values().iter().zip(grid.occupancy()).map(|(&v, &o)| if o { v } else { f32::NAN });
    write_pair(bin, &header, values)
}

pub fn write_bev(bin: &Path, bev: &BevMap, spec: &VoxelGridSpec) -> Result<(), FormatError> {
    let header = GridHeader {
        format: "f32le".into(),
        layout: "z,x,channel".into(),
        shape: vec![bev.depth, bev.width, bev.channels],
        spec: *spec,
        occupied: None,
        data: file_name(bin),
    };
    write_pair(bin, &header, bev.values.iter().copied())
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Header and values of a grid written by this module.
pub fn read_grid(bin: &Path) -> Result<(GridHeader, Vec<f32>), FormatError> {
    let json_path = sidecar(bin);
    let text = std::fs::read_to_string(&json_path).map_err(|e| FormatError::io(&json_path, e))?;
    let header: GridHeader = serde_json::from_str(&text).map_err(|e| FormatError::BadHeader(e.to_string()))?;
    if header.format != "f32le" {
        return Err(FormatError::BadMagic(format!("unsupported format {:?}", header.format)));
    }
    let bytes = std::fs::read(bin).map_err(|e| FormatError::io(bin, e))?;
    let n = header.shape.iter().product::<usize>() * 4;
    if bytes.len() != n {
        return Err(FormatError::TruncatedData { expected: n, found: bytes.len() });
    }
    let values = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok((header, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_round_trip() {
        let spec = VoxelGridSpec { x_range: [0.0, 1.0], y_range: [0.0, 1.0], z_range: [2.0, 3.0], voxel_size: 0.5 };
        let values = (0..8).map(|k| k as f32 * 0.25).collect();
        let occupied = (0..8).map(|k| k % 3 != 0).collect();
        let grid = VoxelGrid::from_parts(spec, values, occupied).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("grid.bin");
        write_voxel_grid(&bin, &grid).unwrap();
        let (header, back) = read_grid(&bin).unwrap();
        assert_eq!(header.shape, vec![2, 2, 2]);
        assert_eq!(header.occupied, Some(5));
        for (k, v) in back.iter().enumerate() {
            if k % 3 == 0 {
                assert!(v.is_nan());
            } else {
                assert_eq!(*v, k as f32 * 0.25);
            }
        }
    }
}
