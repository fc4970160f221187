//! Stage-1 (per image) and Stage-2 (per sequence) objectives.

use serde::{Deserialize, Serialize};

use super::config::LossConfig;
use super::spatial::{depth_loss, edge_weight, normal_base_loss, normal_reg_losses, seg_bce_loss};
use super::temporal::{temporal_depth_loss, temporal_normal_loss, PairMasks};
use crate::align::normalize_depth;
use crate::error::{Error, Result};
use crate::grids::{FlowGrid, NormalGrid, ScalarGrid};

/// Network outputs for one frame. `mask` holds foreground probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePrediction {
    pub depth: ScalarGrid,
    pub normals: NormalGrid,
    pub mask: ScalarGrid,
}

/// Ground truth for one frame. `depth` is metric; it is normalized internally.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTruth {
    pub depth: ScalarGrid,
    pub normals: NormalGrid,
    pub mask: ScalarGrid,
}

/// Flows between frame `k` and `k+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPair {
    pub fwd: FlowGrid,
    pub bwd: FlowGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub depth: f64,
    pub depth_grad: f64,
    pub normal_base: f64,
    pub normal_grad: f64,
    pub normal_lap: f64,
    pub seg: f64,
    pub temp_depth: f64,
    pub temp_normal: f64,
    pub total: f64,
    /// Frame pairs whose temporal reliability set was empty in some direction.
    pub empty_pairs: usize,
}

impl LossBreakdown {
    /// The weighted combination of the components under `cfg`.
    pub fn weighted_total(&self, cfg: &LossConfig) -> f64 {
        cfg.lambda_d * (self.depth + cfg.omega_grad * self.depth_grad)
            + cfg.lambda_n
                * (self.normal_base + cfg.alpha * self.normal_grad + cfg.beta * self.normal_lap)
            + cfg.lambda_s * self.seg
            + cfg.lambda_temp_d * self.temp_depth
            + cfg.lambda_temp_n * self.temp_normal
    }

    fn finish(mut self, cfg: &LossConfig) -> Self {
        self.total = self.weighted_total(cfg);
        self
    }
}

/// Depth, normal, and segmentation losses for one frame, gated by the ground-truth mask.
pub fn stage1_loss(
    pred: &FramePrediction,
    gt: &FrameTruth,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    let gt_norm = normalize_depth(&gt.depth)?;
    let d = depth_loss(&pred.depth, &gt_norm.depth, &gt.mask, cfg)?;
    let base = normal_base_loss(&pred.normals, &gt.normals, &gt.mask)?;
    let w_edge = edge_weight(&gt.normals, cfg.eta)?;
    let (grad, lap) = normal_reg_losses(&pred.normals, &gt.normals, &w_edge, &gt.mask, cfg)?;
    let seg = seg_bce_loss(&pred.mask, &gt.mask)?;
    Ok(LossBreakdown {
        depth: d.rms.value,
        depth_grad: d.grad.value,
        normal_base: base.value,
        normal_grad: grad.value,
        normal_lap: lap.value,
        seg: seg.value,
        ..Default::default()
    }
    .finish(cfg))
}

/// Temporal terms for the pair `(k, k+1)`: `(depth term, normal term, empty flag)`.
pub fn pair_temporal_terms(
    pk: &FramePrediction,
    pk1: &FramePrediction,
    flows: &FlowPair,
    cfg: &LossConfig,
) -> Result<(f64, f64, bool)> {
    let masks = PairMasks::new(&flows.fwd, &flows.bwd, Some((&pk.depth, &pk1.depth)), cfg)?;
    let td = temporal_depth_loss(&pk.depth, &pk1.depth, &flows.fwd, &flows.bwd, &masks)?;
    let tn = temporal_normal_loss(&pk.normals, &pk1.normals, &flows.fwd, &flows.bwd, &masks)?;
    Ok((td.value, tn.value, td.empty))
}

/// Mean Stage-1 loss over all frames plus temporal terms averaged over adjacent pairs.
pub fn stage2_loss(
    preds: &[FramePrediction],
    gts: &[FrameTruth],
    flows: &[FlowPair],
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    if preds.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "stage2_loss needs at least 2 frames, got {}",
            preds.len()
        )));
    }
    if gts.len() != preds.len() || flows.len() + 1 != preds.len() {
        return Err(Error::Shape(format!(
            "stage2_loss: {} predictions, {} ground-truth frames, {} flow pairs",
            preds.len(),
            gts.len(),
            flows.len()
        )));
    }
    let mut acc = LossBreakdown::default();
    for (p, g) in preds.iter().zip(gts) {
        let s = stage1_loss(p, g, cfg)?;
        acc.depth += s.depth;
        acc.depth_grad += s.depth_grad;
        acc.normal_base += s.normal_base;
        acc.normal_grad += s.normal_grad;
        acc.normal_lap += s.normal_lap;
        acc.seg += s.seg;
    }
    let nf = preds.len() as f64;
    acc.depth /= nf;
    acc.depth_grad /= nf;
    acc.normal_base /= nf;
    acc.normal_grad /= nf;
    acc.normal_lap /= nf;
    acc.seg /= nf;

    for (k, pair) in flows.iter().enumerate() {
        let (td, tn, empty) = pair_temporal_terms(&preds[k], &preds[k + 1], pair, cfg)?;
        acc.temp_depth += td;
        acc.temp_normal += tn;
        acc.empty_pairs += usize::from(empty);
    }
    let np = flows.len() as f64;
    acc.temp_depth /= np;
    acc.temp_normal /= np;
    Ok(acc.finish(cfg))
}
