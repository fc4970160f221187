//! Single-frame supervision: depth, surface normals, and foreground segmentation.

use serde::{Deserialize, Serialize};

use super::config::LossConfig;
use super::stencil::{laplacian, sobel_gradients, sobel_magnitude};
use crate::align::{apply_alignment, fit_scale_shift, supervision_weights, AlignmentParams};
use crate::error::{Error, Result};
use crate::grids::{dot3, Grid, NormalGrid, ScalarGrid};

/// BCE probability clamp.
pub const BCE_EPS: f64 = 1e-7;

/// A masked mean together with the number of pixels it averages.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MaskedMean {
    pub value: f64,
    pub pixels: usize,
}

impl MaskedMean {
    pub fn from_sum(sum: f64, pixels: usize) -> Self {
        MaskedMean {
            value: if pixels == 0 {
                0.0
            } else {
                sum / pixels as f64
            },
            pixels,
        }
    }
}

/// Averages per-level means over the pyramid levels that had at least one pixel.
fn pyramid_mean(level_means: impl IntoIterator<Item = MaskedMean>) -> MaskedMean {
    let (mut sum, mut levels, mut pixels) = (0.0, 0usize, 0usize);
    for m in level_means {
        if m.pixels > 0 {
            sum += m.value;
            levels += 1;
            pixels += m.pixels;
        }
    }
    MaskedMean {
        value: if levels == 0 {
            0.0
        } else {
            sum / levels as f64
        },
        pixels,
    }
}

/// Pyramid of successive 2x average-pooled grids, stopping before a level drops under 3x3.
fn pyramid<const C: usize>(g: &Grid<C>, levels: usize) -> Vec<Grid<C>> {
    let mut out = vec![g.clone()];
    while out.len() < levels {
        let next = out.last().unwrap().downsample2();
        if next.width() < 3 || next.height() < 3 {
            break;
        }
        out.push(next);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthLoss {
    /// Masked RMS of `s*pred + t - gt`.
    pub rms: MaskedMean,
    /// Multi-scale mean L1 Sobel response of the aligned residual.
    pub grad: MaskedMean,
    pub alignment: AlignmentParams,
}

impl DepthLoss {
    pub fn total(&self, cfg: &LossConfig) -> f64 {
        self.rms.value + cfg.omega_grad * self.grad.value
    }
}

/// Scale/shift-aligned depth loss against `[0,1]`-normalized ground truth.
///
/// Pixels with mask `>= 0.5` participate; their soft mask values weight the
/// alignment fit.
pub fn depth_loss(
    pred: &ScalarGrid,
    gt_norm: &ScalarGrid,
    mask: &ScalarGrid,
    cfg: &LossConfig,
) -> Result<DepthLoss> {
    pred.ensure_same_shape(gt_norm, "depth_loss pred/gt")?;
    pred.ensure_same_shape(mask, "depth_loss pred/mask")?;
    let weights = supervision_weights(mask);
    let alignment = fit_scale_shift(pred, gt_norm, &weights)?;
    let aligned = apply_alignment(pred, &alignment);

    let residual = ScalarGrid::from_fn(pred.width(), pred.height(), |x, y| {
        if weights.scalar(x, y)? <= 0.0 {
            return None;
        }
        Some([aligned.scalar(x, y)? - gt_norm.scalar(x, y)?])
    });
    let n = residual.valid_count();
    if n == 0 {
        return Err(Error::Empty("depth_loss: no supervised pixels".into()));
    }
    let sq: f64 = residual.values().iter().map(|v| v[0] * v[0]).sum();
    let rms = MaskedMean {
        value: (sq / n as f64).sqrt(),
        pixels: n,
    };

    let mut level_means = Vec::new();
    if residual.width() >= 3 && residual.height() >= 3 {
        for level in pyramid(&residual, cfg.grad_scales) {
            let (gx, gy) = sobel_gradients(&level)?;
            let (mut sum, mut count) = (0.0, 0);
            for i in 0..level.len() {
                if let (Some([a]), Some([b])) = (gx.get_index(i), gy.get_index(i)) {
                    sum += a.abs() + b.abs();
                    count += 1;
                }
            }
            level_means.push(MaskedMean::from_sum(sum, count));
        }
    }
    Ok(DepthLoss {
        rms,
        grad: pyramid_mean(level_means),
        alignment,
    })
}

fn supervised(mask: &ScalarGrid, i: usize) -> bool {
    mask.scalar_at(i).is_some_and(|m| m >= 0.5)
}

/// Masked mean of `||N - N_hat||_1 + (1 - N . N_hat)`.
pub fn normal_base_loss(
    pred: &NormalGrid,
    gt: &NormalGrid,
    mask: &ScalarGrid,
) -> Result<MaskedMean> {
    pred.ensure_same_shape(gt, "normal_base_loss pred/gt")?;
    pred.ensure_same_shape(mask, "normal_base_loss pred/mask")?;
    let (mut sum, mut n) = (0.0, 0);
    for i in 0..pred.len() {
        if !supervised(mask, i) {
            continue;
        }
        if let (Some(p), Some(g)) = (pred.get_index(i), gt.get_index(i)) {
            let l1: f64 = (0..3).map(|c| (p[c] - g[c]).abs()).sum();
            sum += l1 + (1.0 - dot3(&p, &g));
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty(
            "normal_base_loss: no supervised pixels".into(),
        ));
    }
    Ok(MaskedMean::from_sum(sum, n))
}

/// `1 + eta * minmax(||grad N||)` over pixels where the Sobel response exists.
///
/// Valid ground-truth pixels without a Sobel response (image border, next to
/// invalid pixels) get weight 1. A constant magnitude yields `w = 1` everywhere.
pub fn edge_weight(gt: &NormalGrid, eta: f64) -> Result<ScalarGrid> {
    let mag = sobel_magnitude(gt)?;
    let range = mag.valid_range();
    Ok(ScalarGrid::from_fn(gt.width(), gt.height(), |x, y| {
        gt.get(x, y)?;
        let w = match (mag.scalar(x, y), range) {
            (Some(m), Some((lo, hi))) if hi > lo => 1.0 + eta * (m - lo) / (hi - lo),
            _ => 1.0,
        };
        Some([w])
    }))
}

/// Edge-weighted normal regularizers `(gradient term, multi-scale Laplacian term)`.
pub fn normal_reg_losses(
    pred: &NormalGrid,
    gt: &NormalGrid,
    w_edge: &ScalarGrid,
    mask: &ScalarGrid,
    cfg: &LossConfig,
) -> Result<(MaskedMean, MaskedMean)> {
    pred.ensure_same_shape(gt, "normal_reg_losses pred/gt")?;
    pred.ensure_same_shape(w_edge, "normal_reg_losses pred/w_edge")?;
    pred.ensure_same_shape(mask, "normal_reg_losses pred/mask")?;

    let (pgx, pgy) = sobel_gradients(pred)?;
    let (ggx, ggy) = sobel_gradients(gt)?;
    let (mut sum, mut n) = (0.0, 0);
    for i in 0..pred.len() {
        if !supervised(mask, i) {
            continue;
        }
        let Some([w]) = w_edge.get_index(i) else {
            continue;
        };
        if let (Some(a), Some(b), Some(c), Some(d)) = (
            pgx.get_index(i),
            pgy.get_index(i),
            ggx.get_index(i),
            ggy.get_index(i),
        ) {
            let l1: f64 = (0..3)
                .map(|k| (a[k] - c[k]).abs() + (b[k] - d[k]).abs())
                .sum();
            sum += w * l1;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty(
            "normal_reg_losses: no supervised interior pixels".into(),
        ));
    }
    let grad = MaskedMean::from_sum(sum, n);

    let preds = pyramid(pred, cfg.grad_scales);
    let gts = pyramid(gt, preds.len());
    let ws = pyramid(w_edge, preds.len());
    let masks = pyramid(mask, preds.len());
    let mut level_means = Vec::new();
    for l in 0..preds.len() {
        let lp = laplacian(&preds[l])?;
        let lg = laplacian(&gts[l])?;
        let (mut sum, mut n) = (0.0, 0);
        for i in 0..lp.len() {
            if !supervised(&masks[l], i) {
                continue;
            }
            if let (Some(a), Some(b), Some([w])) =
                (lp.get_index(i), lg.get_index(i), ws[l].get_index(i))
            {
                sum += w * (0..3).map(|k| (a[k] - b[k]).abs()).sum::<f64>();
                n += 1;
            }
        }
        level_means.push(MaskedMean::from_sum(sum, n));
    }
    Ok((grad, pyramid_mean(level_means)))
}

/// Mean binary cross-entropy over pixels valid in both maps; `pred` is clamped to `[eps, 1-eps]`.
pub fn seg_bce_loss(pred: &ScalarGrid, gt: &ScalarGrid) -> Result<MaskedMean> {
    pred.ensure_same_shape(gt, "seg_bce_loss")?;
    let (mut sum, mut n) = (0.0, 0);
    for i in 0..pred.len() {
        if let (Some(p), Some(g)) = (pred.scalar_at(i), gt.scalar_at(i)) {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            sum -= g * p.ln() + (1.0 - g) * (1.0 - p).ln();
            n += 1;
        }
    }
    Ok(MaskedMean::from_sum(sum, n))
}
