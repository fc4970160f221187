//! Per-image depth and surface-normal errors.

use serde::{Deserialize, Serialize};

use crate::align::{apply_alignment, fit_scale_shift, supervision_weights, AlignmentParams};
use crate::error::{Error, Result};
use crate::grids::{dot3, norm3, NormalGrid, ScalarGrid};

/// Angular thresholds in degrees for the `Acc` fractions.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [11.25, 22.5, 30.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub rmse: f64,
    /// 0 when no evaluated pixel has positive ground truth.
    pub absrel: f64,
    pub pixel_count: usize,
    /// Pixels that contributed to AbsRel.
    pub absrel_count: usize,
    /// Evaluated pixels left out of AbsRel because their ground truth is `<= 0`.
    pub nonpositive_gt: usize,
    /// The scale/shift used when evaluating in aligned mode.
    pub alignment: Option<AlignmentParams>,
}

fn in_mask(mask: &ScalarGrid, i: usize) -> bool {
    mask.scalar_at(i).is_some_and(|m| m >= 0.5)
}

/// RMSE and AbsRel over pixels valid in both maps with mask `>= 0.5`.
///
/// With `aligned`, the prediction is first mapped through the least-squares
/// scale/shift fit against `gt`, weighted by the thresholded mask.
pub fn depth_metrics(
    pred: &ScalarGrid,
    gt: &ScalarGrid,
    mask: &ScalarGrid,
    aligned: bool,
) -> Result<DepthMetrics> {
    pred.ensure_same_shape(gt, "depth_metrics pred/gt")?;
    pred.ensure_same_shape(mask, "depth_metrics pred/mask")?;
    let alignment = if aligned {
        Some(fit_scale_shift(pred, gt, &supervision_weights(mask))?)
    } else {
        None
    };
    let pred = match &alignment {
        Some(a) => apply_alignment(pred, a),
        None => pred.clone(),
    };
    depth_errors(&pred, gt, mask, alignment)
}

/// Depth errors of an already-transformed prediction.
pub fn depth_errors(
    pred: &ScalarGrid,
    gt: &ScalarGrid,
    mask: &ScalarGrid,
    alignment: Option<AlignmentParams>,
) -> Result<DepthMetrics> {
    let (mut sq, mut rel, mut n, mut n_rel, mut skipped) = (0.0, 0.0, 0usize, 0usize, 0usize);
    for i in 0..pred.len() {
        if !in_mask(mask, i) {
            continue;
        }
        let (Some(p), Some(g)) = (pred.scalar_at(i), gt.scalar_at(i)) else {
            continue;
        };
        let d = p - g;
        sq += d * d;
        n += 1;
        if g > 0.0 {
            rel += d.abs() / g;
            n_rel += 1;
        } else {
            skipped += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("depth_metrics: no evaluated pixels".into()));
    }
    Ok(DepthMetrics {
        rmse: (sq / n as f64).sqrt(),
        absrel: if n_rel == 0 { 0.0 } else { rel / n_rel as f64 },
        pixel_count: n,
        absrel_count: n_rel,
        nonpositive_gt: skipped,
        alignment,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccEntry {
    pub threshold_deg: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalMetrics {
    pub mean_deg: f64,
    pub median_deg: f64,
    pub acc: Vec<AccEntry>,
    pub pixel_count: usize,
}

impl NormalMetrics {
    pub fn acc_at(&self, threshold_deg: f64) -> Option<f64> {
        self.acc
            .iter()
            .find(|e| e.threshold_deg == threshold_deg)
            .map(|e| e.fraction)
    }
}

/// Angle in degrees between two vectors.
///
/// Equals `acos(clamp(a . b))` for unit vectors, but the `atan2(|a x b|, a . b)`
/// form keeps full precision near 0 and 180 degrees, where `acos` turns a
/// one-ulp dot-product error into about 1e-6 degrees.
pub fn angle_deg(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    norm3(&cross).atan2(dot3(a, b)).to_degrees()
}

/// Lower median: element `(n-1)/2` of the sorted values.
pub fn lower_median(values: &mut [f64]) -> f64 {
    let k = (values.len() - 1) / 2;
    *values.select_nth_unstable_by(k, f64::total_cmp).1
}

/// Checks that thresholds are finite and strictly increasing.
pub fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.iter().any(|t| !t.is_finite()) || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "thresholds must be finite and strictly increasing, got {thresholds:?}"
        )));
    }
    Ok(())
}

/// Mean, lower median, and `Acc_t` (fraction with angle strictly below `t`).
pub fn normal_metrics(
    pred: &NormalGrid,
    gt: &NormalGrid,
    mask: &ScalarGrid,
    thresholds: &[f64],
) -> Result<NormalMetrics> {
    pred.ensure_same_shape(gt, "normal_metrics pred/gt")?;
    pred.ensure_same_shape(mask, "normal_metrics pred/mask")?;
    check_thresholds(thresholds)?;
    let mut angles: Vec<f64> = (0..pred.len())
        .filter(|&i| in_mask(mask, i))
        .filter_map(|i| Some(angle_deg(&pred.get_index(i)?, &gt.get_index(i)?)))
        .collect();
    if angles.is_empty() {
        return Err(Error::Empty("normal_metrics: no evaluated pixels".into()));
    }
    let n = angles.len();
    let mean = angles.iter().sum::<f64>() / n as f64;
    let acc = thresholds
        .iter()
        .map(|&t| AccEntry {
            threshold_deg: t,
            fraction: angles.iter().filter(|&&a| a < t).count() as f64 / n as f64,
        })
        .collect();
    Ok(NormalMetrics {
        mean_deg: mean,
        median_deg: lower_median(&mut angles),
        acc,
        pixel_count: n,
    })
}
