//! KITTI-style calibration files: `key: v0 v1 ...` lines.
//!
//! Projection matrices are read from `P<n>` and `P_rect_<nn>` keys. Other
//! keys (`R0_rect`, `Tr_velo_to_cam`, `calib_time`, ...) must still be
//! well-formed `key: value` lines but their values are not interpreted.
//! Blank lines and lines starting with `#` are skipped.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use dfm_core::geometry::Intrinsics;
use thiserror::Error;

/// Why a line was rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum MalformedReason {
    /// No `:` between key and values.
    MissingSeparator,
    EmptyKey,
    /// Fewer than the 12 values of a 3x4 matrix.
    TooFewValues(usize),
    TooManyValues(usize),
    /// Token at 1-based position `position` does not parse as a number.
    NonNumeric {
        position: usize,
        token: String,
    },
    NonFinite {
        position: usize,
    },
    /// `P00` or `P11` is not positive.
    NonPositiveFocal,
    /// The left 3x3 block is not of the rectified form
    /// `[[fx 0 cu] [0 fy cv] [0 0 1]]`.
    NotRectified,
    DuplicateKey(String),
}

impl fmt::Display for MalformedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MissingSeparator => write!(f, "missing ':' separator"),
            Self::EmptyKey => write!(f, "empty key"),
            Self::TooFewValues(n) => write!(f, "expected 12 values, found {n}"),
            Self::TooManyValues(n) => write!(f, "expected 12 values, found {n}"),
            Self::NonNumeric { position, token } => write!(f, "value {position} ({token:?}) is not a number"),
            Self::NonFinite { position } => write!(f, "value {position} is not finite"),
            Self::NonPositiveFocal => write!(f, "focal length must be positive"),
            Self::NotRectified => write!(f, "projection matrix is not rectified"),
            Self::DuplicateKey(k) => write!(f, "key {k:?} appears twice"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: MalformedReason },
    #[error("no camera {0}")]
    MissingCamera(String),
    #[error("{0}")]
    Io(String),
}

/// One projection matrix and what it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord {
    /// Key as written in the file, e.g. `P2` or `P_rect_02`.
    pub camera: String,
    /// Row-major 3x4 projection matrix.
    pub projection: [[f64; 4]; 3],
    pub intrinsics: Intrinsics,
    /// `-P03 / P00`: horizontal offset of this camera from the reference
    /// camera, in meters.
    pub baseline_offset: f64,
}

impl CalibrationRecord {
    /// Camera index from the key (`P2` → 2, `P_rect_02` → 2).
    pub fn index(&self) -> Option<usize> {
        camera_index(&self.camera)
    }
}

fn camera_index(key: &str) -> Option<usize> {
    let digits = key.strip_prefix("P_rect_").or_else(|| key.strip_prefix('P'))?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Every projection matrix in the file, in file order. A file without
/// one is [`CalibError::MissingCamera`].
pub fn parse_calibration(text: &str) -> Result<Vec<CalibrationRecord>, CalibError> {
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let bad = |reason| CalibError::MalformedLine { line, reason };
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, values) = trimmed.split_once(':').ok_or(bad(MalformedReason::MissingSeparator))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(bad(MalformedReason::EmptyKey));
        }
        if !seen.insert(key.to_string()) {
            return Err(bad(MalformedReason::DuplicateKey(key.to_string())));
        }
        if camera_index(key).is_none() {
            continue;
        }
        let projection = parse_matrix(values).map_err(bad)?;
        records.push(record(key, projection).map_err(bad)?);
    }
    if records.is_empty() {
        return Err(CalibError::MissingCamera("any".into()));
    }
    Ok(records)
}

fn parse_matrix(values: &str) -> Result<[[f64; 4]; 3], MalformedReason> {
    let tokens: Vec<&str> = values.split_whitespace().collect();
    match tokens.len() {
        n if n < 12 => return Err(MalformedReason::TooFewValues(n)),
        n if n > 12 => return Err(MalformedReason::TooManyValues(n)),
        _ => {}
    }
    let mut m = [[0.0; 4]; 3];
    for (k, tok) in tokens.iter().enumerate() {
        let v: f64 =
            tok.parse().map_err(|_| MalformedReason::NonNumeric { position: k + 1, token: tok.to_string() })?;
        if !v.is_finite() {
            return Err(MalformedReason::NonFinite { position: k + 1 });
        }
        m[k / 4][k % 4] = v;
    }
    Ok(m)
}

fn record(key: &str, p: [[f64; 4]; 3]) -> Result<CalibrationRecord, MalformedReason> {
    if !(p[0][0] > 0.0 && p[1][1] > 0.0) {
        return Err(MalformedReason::NonPositiveFocal);
    }
    if p[0][1] != 0.0 || p[1][0] != 0.0 || p[2][0] != 0.0 || p[2][1] != 0.0 || p[2][2] != 1.0 {
        return Err(MalformedReason::NotRectified);
    }
    let intrinsics =
        Intrinsics::new(p[0][0], p[1][1], p[0][2], p[1][2]).map_err(|_| MalformedReason::NonPositiveFocal)?;
    Ok(CalibrationRecord { camera: key.to_string(), projection: p, intrinsics, baseline_offset: -p[0][3] / p[0][0] })
}

/// The record for camera `index`, or camera 2 (the KITTI left color
/// camera) when `index` is `None` and the file has one, else the first.
pub fn select_camera(records: &[CalibrationRecord], index: Option<usize>) -> Result<&CalibrationRecord, CalibError> {
    match index {
        Some(k) => {
            records.iter().find(|r| r.index() == Some(k)).ok_or_else(|| CalibError::MissingCamera(format!("P{k}")))
        }
        None => records
            .iter()
            .find(|r| r.index() == Some(2))
            .or_else(|| records.first())
            .ok_or_else(|| CalibError::MissingCamera("any".into())),
    }
}

pub fn load_intrinsics(path: &Path, camera: Option<usize>) -> Result<Intrinsics, CalibError> {
    let text = std::fs::read_to_string(path).map_err(|e| CalibError::Io(format!("{}: {e}", path.display())))?;
    let records = parse_calibration(&text)?;
    Ok(select_camera(&records, camera)?.intrinsics)
}

/// A single-camera calibration file for `cam`.
pub fn format_calibration(key: &str, cam: &Intrinsics) -> String {
    format!("{key}: {} 0 {} 0 0 {} {} 0 0 0 1 0\n", cam.fx, cam.cu, cam.fy, cam.cv)
}
