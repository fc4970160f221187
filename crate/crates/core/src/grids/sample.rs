use super::grid::Grid;

/// Bilinear sample at subpixel `(x, y)`.
///
/// Returns `None` outside `[0, W-1] x [0, H-1]` or when any neighbor with a
/// nonzero weight is invalid. Zero-weight neighbors are never read, so integer
/// coordinates reproduce the pixel exactly and the last row/column is reachable.
pub fn bilinear_sample<const C: usize>(grid: &Grid<C>, x: f64, y: f64) -> Option<[f64; C]> {
    let (w, h) = (grid.width(), grid.height());
    if w == 0 || h == 0 || !x.is_finite() || !y.is_finite() {
        return None;
    }
    if x < 0.0 || y < 0.0 || x > (w - 1) as f64 || y > (h - 1) as f64 {
        return None;
    }
    let x0 = (x.floor() as usize).min(w - 1);
    let y0 = (y.floor() as usize).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;

    let mut out = [0.0; C];
    let taps = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x0 + 1, y0, fx * (1.0 - fy)),
        (x0, y0 + 1, (1.0 - fx) * fy),
        (x0 + 1, y0 + 1, fx * fy),
    ];
    for (tx, ty, wgt) in taps {
        if wgt == 0.0 {
            continue;
        }
        let v = grid.get(tx, ty)?;
        for c in 0..C {
            out[c] += wgt * v[c];
        }
    }
    Some(out)
}
