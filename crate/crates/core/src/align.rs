//! Depth normalization and per-image least-squares scale/shift alignment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grids::ScalarGrid;

/// Minimum-variance guard for the normal equations, relative to the predicted scale.
const VARIANCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentParams {
    pub scale: f64,
    pub shift: f64,
    /// Pixels with positive weight that took part in the fit.
    pub valid_count: usize,
    /// Set when the system was ill-posed and the fallback `(1, mean residual)` was used.
    pub degenerate: bool,
}

impl AlignmentParams {
    pub const IDENTITY: AlignmentParams = AlignmentParams {
        scale: 1.0,
        shift: 0.0,
        valid_count: 0,
        degenerate: false,
    };

    pub fn new(scale: f64, shift: f64) -> Self {
        AlignmentParams {
            scale,
            shift,
            ..Self::IDENTITY
        }
    }

    pub fn negative_scale(&self) -> bool {
        self.scale < 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedDepth {
    pub depth: ScalarGrid,
    /// `max == min` over the valid pixels; the output is all zeros.
    pub degenerate: bool,
}

/// Min-max normalizes valid pixels to `[0, 1]`.
pub fn normalize_depth(depth: &ScalarGrid) -> Result<NormalizedDepth> {
    let (lo, hi) = depth
        .valid_range()
        .ok_or_else(|| Error::Empty("depth map has no valid pixels".into()))?;
    let span = hi - lo;
    let degenerate = span <= 0.0;
    let out = depth.map(|[v]| {
        Some([if degenerate {
            0.0
        } else {
            ((v - lo) / span).clamp(0.0, 1.0)
        }])
    });
    Ok(NormalizedDepth {
        depth: out,
        degenerate,
    })
}

fn weighted_triples<'a>(
    pred: &'a ScalarGrid,
    gt: &'a ScalarGrid,
    mask: &'a ScalarGrid,
) -> impl Iterator<Item = (f64, f64, f64)> + 'a {
    (0..pred.len()).filter_map(move |i| {
        let w = mask.scalar_at(i)?;
        if !(w > 0.0) {
            return None;
        }
        Some((w, pred.scalar_at(i)?, gt.scalar_at(i)?))
    })
}

/// Closed-form weighted least squares for `min sum w (s*pred + t - gt)^2`.
///
/// Mask values are the weights; zero-weight and invalid pixels are ignored.
/// Fewer than two weighted pixels, or zero weighted variance in `pred`,
/// yields `s = 1, t = weighted mean(gt - pred)` with `degenerate` set.
pub fn fit_scale_shift(
    pred: &ScalarGrid,
    gt: &ScalarGrid,
    mask: &ScalarGrid,
) -> Result<AlignmentParams> {
    pred.ensure_same_shape(gt, "fit_scale_shift pred/gt")?;
    pred.ensure_same_shape(mask, "fit_scale_shift pred/mask")?;

    // two-pass centered sums; the raw normal equations lose precision when
    // pred carries a large offset
    let (mut sw, mut swp, mut swg, mut n) = (0.0, 0.0, 0.0, 0usize);
    for (w, p, g) in weighted_triples(pred, gt, mask) {
        sw += w;
        swp += w * p;
        swg += w * g;
        n += 1;
    }
    if n == 0 {
        return Ok(AlignmentParams {
            degenerate: true,
            ..AlignmentParams::IDENTITY
        });
    }
    let (mp, mg) = (swp / sw, swg / sw);
    let (mut spp, mut spg, mut sqp) = (0.0, 0.0, 0.0);
    for (w, p, g) in weighted_triples(pred, gt, mask) {
        let (dp, dg) = (p - mp, g - mg);
        spp += w * dp * dp;
        spg += w * dp * dg;
        sqp += w * p * p;
    }
    let scale_ref = (sqp / sw).max(f64::MIN_POSITIVE);
    if n < 2 || spp / sw <= VARIANCE_EPS * scale_ref {
        return Ok(AlignmentParams {
            scale: 1.0,
            shift: mg - mp,
            valid_count: n,
            degenerate: true,
        });
    }
    let scale = spg / spp;
    Ok(AlignmentParams {
        scale,
        shift: mg - scale * mp,
        valid_count: n,
        degenerate: false,
    })
}

/// One scale/shift fitted jointly over several frames, as if they were a
/// single image. All grids must share one shape.
pub fn fit_scale_shift_joint(
    frames: &[(&ScalarGrid, &ScalarGrid, &ScalarGrid)],
) -> Result<AlignmentParams> {
    let Some(&(first, _, _)) = frames.first() else {
        return Err(Error::Empty("fit_scale_shift_joint: no frames".into()));
    };
    let (w, h) = (first.width(), first.height());
    let stack = |part: usize| -> Result<ScalarGrid> {
        let (mut values, mut valid) = (Vec::new(), Vec::new());
        for f in frames {
            let g = [f.0, f.1, f.2][part];
            first.ensure_same_shape(g, "fit_scale_shift_joint frames")?;
            values.extend_from_slice(g.values());
            valid.extend_from_slice(g.validity());
        }
        ScalarGrid::new(w, h * frames.len(), values, valid)
    };
    fit_scale_shift(&stack(0)?, &stack(1)?, &stack(2)?)
}

/// `s * v + t` on valid pixels.
pub fn apply_alignment(pred: &ScalarGrid, params: &AlignmentParams) -> ScalarGrid {
    pred.map(|[v]| Some([params.scale * v + params.shift]))
}

/// The weighted objective `sum w (s*pred + t - gt)^2` minimized by [`fit_scale_shift`].
pub fn alignment_objective(
    pred: &ScalarGrid,
    gt: &ScalarGrid,
    mask: &ScalarGrid,
    scale: f64,
    shift: f64,
) -> f64 {
    weighted_triples(pred, gt, mask)
        .map(|(w, p, g)| {
            let r = scale * p + shift - g;
            w * r * r
        })
        .sum()
}

/// Thresholded supervision weights: soft mask values `>= 0.5` are kept as
/// weights, everything else (and invalid pixels) gets zero.
pub fn supervision_weights(mask: &ScalarGrid) -> ScalarGrid {
    ScalarGrid::from_fn(mask.width(), mask.height(), |x, y| {
        Some([mask.scalar(x, y).filter(|&m| m >= 0.5).unwrap_or(0.0)])
    })
}
