//! Flow warping, reliability masks, and the bidirectional temporal losses.

use serde::{Deserialize, Serialize};

use super::config::LossConfig;
use super::spatial::MaskedMean;
use super::stencil::{dilate, sobel_magnitude};
use crate::align::normalize_depth;
use crate::error::Result;
use crate::grids::{bilinear_sample, dot3, normalize3, FlowGrid, Grid, NormalGrid, ScalarGrid};

/// Warped normals shorter than this are dropped instead of renormalized.
pub const MIN_WARPED_NORM: f64 = 1e-9;

/// Backward warp: `out(p) = sample(g, p + flow(p))`.
pub fn warp<const C: usize>(g: &Grid<C>, flow: &FlowGrid) -> Grid<C> {
    Grid::from_fn(g.width(), g.height(), |x, y| {
        let [u, v] = flow.get(x, y)?;
        bilinear_sample(g, x as f64 + u, y as f64 + v)
    })
}

/// One flow-aligned correspondence: pixel index, target sample, warped source sample.
pub type Correspondence<const C: usize> = (usize, [f64; C], [f64; C]);

/// Pixels where `keep(i)` holds, the target is valid, and the warped source is
/// valid, paired with both samples.
///
/// Every temporal loss and metric goes through here so that they share the
/// same warp and pixel set.
pub fn flow_aligned<const C: usize>(
    target: &Grid<C>,
    source: &Grid<C>,
    flow: &FlowGrid,
    keep: impl Fn(usize) -> bool,
) -> Vec<Correspondence<C>> {
    let w = target.width();
    (0..target.len())
        .filter(|&i| keep(i))
        .filter_map(|i| {
            let t = target.get_index(i)?;
            let [u, v] = flow.get_index(i)?;
            let s = bilinear_sample(source, (i % w) as f64 + u, (i / w) as f64 + v)?;
            Some((i, t, s))
        })
        .collect()
}

/// Round-trip displacement `fwd(p) + bwd(p + fwd(p))` when both are defined.
pub fn round_trip_error(fwd: &FlowGrid, bwd: &FlowGrid, x: usize, y: usize) -> Option<f64> {
    let [u, v] = fwd.get(x, y)?;
    let [bu, bv] = bilinear_sample(bwd, x as f64 + u, y as f64 + v)?;
    Some(((u + bu).powi(2) + (v + bv).powi(2)).sqrt())
}

/// `1` where the forward/backward round trip returns within `tau_c` pixels, else `0`.
pub fn cycle_mask(fwd: &FlowGrid, bwd: &FlowGrid, tau_c: f64) -> ScalarGrid {
    ScalarGrid::from_fn(fwd.width(), fwd.height(), |x, y| {
        let ok = round_trip_error(fwd, bwd, x, y).is_some_and(|e| e <= tau_c);
        Some([if ok { 1.0 } else { 0.0 }])
    })
}

/// Complement of the dilated depth-edge map of `pred_d`.
///
/// Depth is min-max normalized to `[0,1]` first; a pixel is an edge when its
/// Sobel magnitude divided by 8 exceeds `cfg.edge_threshold`.
pub fn depth_edge_mask(pred_d: &ScalarGrid, cfg: &LossConfig) -> Result<ScalarGrid> {
    let (w, h) = (pred_d.width(), pred_d.height());
    let edges = match normalize_depth(pred_d) {
        Ok(norm) => {
            let mag = sobel_magnitude(&norm.depth)?;
            (0..mag.len())
                .map(|i| {
                    mag.scalar_at(i)
                        .is_some_and(|m| m / 8.0 > cfg.edge_threshold)
                })
                .collect()
        }
        // nothing valid, nothing to mark
        Err(_) => {
            if w < 3 || h < 3 {
                sobel_magnitude(pred_d)?;
            }
            vec![false; w * h]
        }
    };
    let grown = dilate(&edges, w, h, cfg.edge_dilate_radius);
    Ok(ScalarGrid::from_fn(w, h, |x, y| {
        Some([if grown[y * w + x] { 0.0 } else { 1.0 }])
    }))
}

/// Per-direction reliability sets `M = M_cyc ∩ M_edge`.
///
/// `forward` gates frame-`k` pixels compared against frame `k+1` warped by the
/// forward flow; `backward` gates frame-`k+1` pixels against frame `k` warped by
/// the backward flow. Each direction's edge mask comes from that direction's
/// target-frame depth.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMasks {
    pub forward: Vec<bool>,
    pub backward: Vec<bool>,
}

impl PairMasks {
    pub fn new(
        fwd: &FlowGrid,
        bwd: &FlowGrid,
        depths: Option<(&ScalarGrid, &ScalarGrid)>,
        cfg: &LossConfig,
    ) -> Result<Self> {
        fwd.ensure_same_shape(bwd, "flow pair")?;
        let cyc_f = cycle_mask(fwd, bwd, cfg.tau_c);
        let cyc_b = cycle_mask(bwd, fwd, cfg.tau_c);
        let (edge_f, edge_b) = match depths {
            Some((dk, dk1)) => {
                dk.ensure_same_shape(fwd, "depth/flow")?;
                dk1.ensure_same_shape(fwd, "depth/flow")?;
                (
                    Some(depth_edge_mask(dk, cfg)?),
                    Some(depth_edge_mask(dk1, cfg)?),
                )
            }
            None => (None, None),
        };
        let combine = |cyc: &ScalarGrid, edge: &Option<ScalarGrid>| -> Vec<bool> {
            (0..cyc.len())
                .map(|i| {
                    cyc.scalar_at(i) == Some(1.0)
                        && edge.as_ref().is_none_or(|e| e.scalar_at(i) == Some(1.0))
                })
                .collect()
        };
        Ok(PairMasks {
            forward: combine(&cyc_f, &edge_f),
            backward: combine(&cyc_b, &edge_b),
        })
    }

    pub fn all(len: usize) -> Self {
        PairMasks {
            forward: vec![true; len],
            backward: vec![true; len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalLoss {
    pub forward: MaskedMean,
    pub backward: MaskedMean,
    /// `forward.value + backward.value`.
    pub value: f64,
    /// Set when either direction had an empty reliability set (its term is 0).
    pub empty: bool,
}

impl TemporalLoss {
    fn new(forward: MaskedMean, backward: MaskedMean) -> Self {
        TemporalLoss {
            forward,
            backward,
            value: forward.value + backward.value,
            empty: forward.pixels == 0 || backward.pixels == 0,
        }
    }
}

fn directional<const C: usize>(
    target: &Grid<C>,
    source: &Grid<C>,
    flow: &FlowGrid,
    mask: &[bool],
    residual: impl Fn(&[f64; C], &[f64; C]) -> Option<f64>,
) -> MaskedMean {
    let (mut sum, mut n) = (0.0, 0);
    for (_, t, s) in flow_aligned(target, source, flow, |i| mask[i]) {
        if let Some(r) = residual(&t, &s) {
            sum += r;
            n += 1;
        }
    }
    MaskedMean::from_sum(sum, n)
}

/// Bidirectional flow-aligned L1 depth loss.
pub fn temporal_depth_loss(
    dk: &ScalarGrid,
    dk1: &ScalarGrid,
    fwd: &FlowGrid,
    bwd: &FlowGrid,
    masks: &PairMasks,
) -> Result<TemporalLoss> {
    dk.ensure_same_shape(dk1, "temporal depth frames")?;
    dk.ensure_same_shape(fwd, "temporal depth flow")?;
    let l1 = |t: &[f64; 1], s: &[f64; 1]| Some((t[0] - s[0]).abs());
    Ok(TemporalLoss::new(
        directional(dk, dk1, fwd, &masks.forward, l1),
        directional(dk1, dk, bwd, &masks.backward, l1),
    ))
}

/// Cosine deficit `1 - cos(target, warped)` with the warped vector renormalized.
fn cosine_deficit(t: &[f64; 3], s: &[f64; 3]) -> Option<f64> {
    let t = normalize3(*t, MIN_WARPED_NORM)?;
    let s = normalize3(*s, MIN_WARPED_NORM)?;
    Some(1.0 - dot3(&t, &s).clamp(-1.0, 1.0))
}

/// Bidirectional flow-aligned cosine loss on normals.
pub fn temporal_normal_loss(
    nk: &NormalGrid,
    nk1: &NormalGrid,
    fwd: &FlowGrid,
    bwd: &FlowGrid,
    masks: &PairMasks,
) -> Result<TemporalLoss> {
    nk.ensure_same_shape(nk1, "temporal normal frames")?;
    nk.ensure_same_shape(fwd, "temporal normal flow")?;
    Ok(TemporalLoss::new(
        directional(nk, nk1, fwd, &masks.forward, cosine_deficit),
        directional(nk1, nk, bwd, &masks.backward, cosine_deficit),
    ))
}
