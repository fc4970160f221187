//! Flow-based temporal consistency between adjacent frames.
//!
//! Every metric backward-warps frame `k+1` onto frame `k` with the forward
//! flow and evaluates on frame-`k` pixels in the mask (when given) whose warp
//! is defined.

use serde::{Deserialize, Serialize};

use super::image::angle_deg;
use crate::error::{Error, Result};
use crate::grids::{normalize3, FlowGrid, Grid, NormalGrid, ScalarGrid};
use crate::losses::temporal::{flow_aligned, Correspondence, MIN_WARPED_NORM};
use crate::losses::MaskedMean;

fn aligned<const C: usize>(
    what: &str,
    k: &Grid<C>,
    k1: &Grid<C>,
    fwd: &FlowGrid,
    mask: Option<&ScalarGrid>,
) -> Result<Vec<Correspondence<C>>> {
    k.ensure_same_shape(k1, what)?;
    k.ensure_same_shape(fwd, what)?;
    if let Some(m) = mask {
        k.ensure_same_shape(m, what)?;
    }
    let keep = |i: usize| mask.is_none_or(|m| m.scalar_at(i).is_some_and(|v| v >= 0.5));
    let pairs = flow_aligned(k, k1, fwd, keep);
    if pairs.is_empty() {
        return Err(Error::Empty(format!("{what}: no pixels survive warping")));
    }
    Ok(pairs)
}

fn mean(values: impl Iterator<Item = f64>) -> MaskedMean {
    let (mut sum, mut n) = (0.0, 0);
    for v in values {
        sum += v;
        n += 1;
    }
    MaskedMean::from_sum(sum, n)
}

/// Mean `|D_k - W(D_{k+1})|`.
pub fn opw_depth(
    dk: &ScalarGrid,
    dk1: &ScalarGrid,
    fwd: &FlowGrid,
    mask: Option<&ScalarGrid>,
) -> Result<MaskedMean> {
    let pairs = aligned("opw_depth", dk, dk1, fwd, mask)?;
    Ok(mean(pairs.iter().map(|(_, t, s)| (t[0] - s[0]).abs())))
}

/// Mean L1 norm of `N_k - W(N_{k+1})`, the warped vector renormalized first.
pub fn opw_normal(
    nk: &NormalGrid,
    nk1: &NormalGrid,
    fwd: &FlowGrid,
    mask: Option<&ScalarGrid>,
) -> Result<MaskedMean> {
    let pairs = aligned("opw_normal", nk, nk1, fwd, mask)?;
    Ok(mean(pairs.iter().filter_map(|(_, t, s)| {
        let s = normalize3(*s, MIN_WARPED_NORM)?;
        Some((0..3).map(|c| (t[c] - s[c]).abs()).sum())
    })))
}

/// `sqrt(mean (D_k - W(D_{k+1}))^2)`.
pub fn tc_rmse(
    dk: &ScalarGrid,
    dk1: &ScalarGrid,
    fwd: &FlowGrid,
    mask: Option<&ScalarGrid>,
) -> Result<MaskedMean> {
    let pairs = aligned("tc_rmse", dk, dk1, fwd, mask)?;
    let ms = mean(pairs.iter().map(|(_, t, s)| (t[0] - s[0]).powi(2)));
    Ok(MaskedMean {
        value: ms.value.sqrt(),
        pixels: ms.pixels,
    })
}

/// Per-pixel angle in degrees between `N_k` and the renormalized warp of `N_{k+1}`.
fn warped_angles(pairs: &[Correspondence<3>]) -> impl Iterator<Item = (usize, f64)> + '_ {
    pairs
        .iter()
        .filter_map(|(i, t, s)| Some((*i, angle_deg(t, &normalize3(*s, MIN_WARPED_NORM)?))))
}

/// Mean angle in degrees between `N_k` and `W(N_{k+1})`.
pub fn tc_mean(
    nk: &NormalGrid,
    nk1: &NormalGrid,
    fwd: &FlowGrid,
    mask: Option<&ScalarGrid>,
) -> Result<MaskedMean> {
    let pairs = aligned("tc_mean", nk, nk1, fwd, mask)?;
    Ok(mean(warped_angles(&pairs).map(|(_, a)| a)))
}

/// Mean `|theta_pred - theta_gt|` in degrees, where each theta is the warped
/// adjacent-frame angle of that field. Pixels need both warps defined.
pub fn tc_abs(
    pred_k: &NormalGrid,
    pred_k1: &NormalGrid,
    gt_k: &NormalGrid,
    gt_k1: &NormalGrid,
    fwd: &FlowGrid,
    mask: Option<&ScalarGrid>,
) -> Result<MaskedMean> {
    pred_k.ensure_same_shape(gt_k, "tc_abs pred/gt")?;
    let p = aligned("tc_abs", pred_k, pred_k1, fwd, mask)?;
    let g = aligned("tc_abs", gt_k, gt_k1, fwd, mask)?;
    let mut theta_gt = vec![None; pred_k.len()];
    for (i, a) in warped_angles(&g) {
        theta_gt[i] = Some(a);
    }
    let out = mean(warped_angles(&p).filter_map(|(i, a)| Some((a - theta_gt[i]?).abs())));
    if out.pixels == 0 {
        return Err(Error::Empty(
            "tc_abs: prediction and ground-truth warps share no pixels".into(),
        ));
    }
    Ok(out)
}

/// All temporal metrics for one adjacent pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    /// Index `k` of the pair `(k, k+1)`.
    pub pair: usize,
    pub opw: f64,
    pub tc_rmse: f64,
    pub depth_pixels: usize,
    pub opw_normal: f64,
    pub tc_mean_deg: f64,
    pub tc_abs_deg: f64,
    pub normal_pixels: usize,
}

/// Frame `k` and `k+1` of one field.
pub struct FramePairRef<'a, const C: usize>(pub &'a Grid<C>, pub &'a Grid<C>);

/// Evaluates every temporal metric for one pair. `mask` is frame `k`'s evaluation mask.
pub fn pair_metrics(
    pair: usize,
    depth: FramePairRef<'_, 1>,
    normals: FramePairRef<'_, 3>,
    gt_normals: FramePairRef<'_, 3>,
    fwd: &FlowGrid,
    mask: Option<&ScalarGrid>,
) -> Result<PairMetrics> {
    let opw = opw_depth(depth.0, depth.1, fwd, mask)?;
    let rmse = tc_rmse(depth.0, depth.1, fwd, mask)?;
    let opw_n = opw_normal(normals.0, normals.1, fwd, mask)?;
    let tcm = tc_mean(normals.0, normals.1, fwd, mask)?;
    let tca = tc_abs(normals.0, normals.1, gt_normals.0, gt_normals.1, fwd, mask)?;
    Ok(PairMetrics {
        pair,
        opw: opw.value,
        tc_rmse: rmse.value,
        depth_pixels: opw.pixels,
        opw_normal: opw_n.value,
        tc_mean_deg: tcm.value,
        tc_abs_deg: tca.value,
        normal_pixels: tcm.pixels,
    })
}
