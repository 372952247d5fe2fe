//! Depth error statistics: median absolute error and the fraction of
//! points above fixed error thresholds.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{depth_is_valid, DepthMap, Image, Mask};

/// Error thresholds in meters.
pub const THRESHOLDS: [f64; 4] = [0.2, 0.4, 0.8, 1.6];

/// Objects with fewer valid ground-truth points are skipped.
pub const MIN_OBJECT_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("prediction, ground truth and masks must share one size")]
    SizeMismatch,
    #[error("ground truth has no valid pixel")]
    NoValidPixels,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    /// Lower middle of the sorted absolute errors.
    pub median: f64,
    /// Fraction of points with error strictly above each of [`THRESHOLDS`].
    pub ratios: [f64; 4],
    pub count: usize,
}

impl ErrorStats {
    /// Statistics of absolute errors; `None` when empty. Infinite errors
    /// count above every threshold.
    pub fn from_errors(mut errors: Vec<f64>) -> Option<Self> {
        if errors.is_empty() {
            return None;
        }
        errors.sort_by(f64::total_cmp);
        let n = errors.len();
        let ratios = THRESHOLDS.map(|t| errors.iter().filter(|&&e| e > t).count() as f64 / n as f64);
        debug_assert!(ratios.windows(2).all(|w| w[0] >= w[1]));
        Some(Self { median: errors[(n - 1) / 2], ratios, count: n })
    }
}

/// Per-object statistics averaged over qualifying objects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectAverage {
    pub median: f64,
    pub ratios: [f64; 4],
    pub objects: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthErrorReport {
    pub thresholds: [f64; 4],
    /// Every pixel with valid ground truth.
    pub all: ErrorStats,
    /// All foreground pixels pooled together.
    pub foreground_pooled: Option<ErrorStats>,
    /// Mean of per-object statistics.
    pub foreground_per_object: Option<ObjectAverage>,
}

/// Absolute depth errors at every pixel with valid ground truth. A missing
/// or invalid prediction there counts as an infinite error.
///
/// Foreground is `fg_mask` when given, else the nonzero `labels`. Per-object
/// statistics need `labels` (0 is background) and skip objects with fewer
/// than [`MIN_OBJECT_POINTS`] valid points.
pub fn depth_error_metrics(
    pred: &DepthMap,
    gt: &DepthMap,
    fg_mask: Option<&Mask>,
    labels: Option<&Image<u32>>,
) -> Result<DepthErrorReport, MetricsError> {
    if !pred.same_size(gt) || fg_mask.is_some_and(|m| !m.same_size(gt)) || labels.is_some_and(|l| !l.same_size(gt)) {
        return Err(MetricsError::SizeMismatch);
    }
    let mut all = Vec::new();
    let mut fg = Vec::new();
    let mut objects: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (i, (&p, &g)) in pred.as_slice().iter().zip(gt.as_slice()).enumerate() {
        if !depth_is_valid(g) {
            continue;
        }
        let e = if depth_is_valid(p) { (p as f64 - g as f64).abs() } else { f64::INFINITY };
        all.push(e);
        let label = labels.map_or(0, |l| l.as_slice()[i]);
        let is_fg = match fg_mask {
            Some(m) => m.as_slice()[i],
            None => label != 0,
        };
        if is_fg {
            fg.push(e);
        }
        if label != 0 {
            objects.entry(label).or_default().push(e);
        }
    }
    let all = ErrorStats::from_errors(all).ok_or(MetricsError::NoValidPixels)?;
    let per_object: Vec<ErrorStats> =
        objects.into_values().filter(|v| v.len() >= MIN_OBJECT_POINTS).filter_map(ErrorStats::from_errors).collect();
    let foreground_per_object = (!per_object.is_empty()).then(|| {
        let k = per_object.len() as f64;
        ObjectAverage {
            median: per_object.iter().map(|s| s.median).sum::<f64>() / k,
            ratios: [0, 1, 2, 3].map(|t| per_object.iter().map(|s| s.ratios[t]).sum::<f64>() / k),
            objects: per_object.len(),
        }
    });
    Ok(DepthErrorReport {
        thresholds: THRESHOLDS,
        all,
        foreground_pooled: ErrorStats::from_errors(fg),
        foreground_per_object,
    })
}
