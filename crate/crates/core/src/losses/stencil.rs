//! 3x3 Sobel, 5-point Laplacian, and square dilation.
//!
//! Border pixels are invalid, as is any pixel whose stencil touches an
//! invalid sample.

use crate::error::{Error, Result};
use crate::grids::{Grid, ScalarGrid};

fn check_size<const C: usize>(g: &Grid<C>, op: &str) -> Result<()> {
    if g.width() < 3 || g.height() < 3 {
        return Err(Error::InvalidArgument(format!(
            "{op} needs at least 3x3 pixels, got {}x{}",
            g.width(),
            g.height()
        )));
    }
    Ok(())
}

/// Collects the 3x3 neighborhood around `(x, y)`, or `None` if any sample is invalid.
fn window<const C: usize>(g: &Grid<C>, x: usize, y: usize) -> Option<[[[f64; C]; 3]; 3]> {
    if x == 0 || y == 0 || x + 1 >= g.width() || y + 1 >= g.height() {
        return None;
    }
    let mut w = [[[0.0; C]; 3]; 3];
    for (j, row) in w.iter_mut().enumerate() {
        for (i, cell) in row.iter_mut().enumerate() {
            *cell = g.get(x + i - 1, y + j - 1)?;
        }
    }
    Some(w)
}

/// Un-normalized Sobel responses `(d/dx, d/dy)` per channel, `+y` downward.
///
/// A ramp `v = x` yields `d/dx = 8` on the interior.
pub fn sobel_gradients<const C: usize>(g: &Grid<C>) -> Result<(Grid<C>, Grid<C>)> {
    check_size(g, "sobel")?;
    let (w, h) = (g.width(), g.height());
    let windows: Vec<Option<[[[f64; C]; 3]; 3]>> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| window(g, x, y))
        .collect();
    let gx = Grid::from_fn(w, h, |x, y| {
        let n = windows[y * w + x]?;
        let mut out = [0.0; C];
        for c in 0..C {
            out[c] = (n[0][2][c] + 2.0 * n[1][2][c] + n[2][2][c])
                - (n[0][0][c] + 2.0 * n[1][0][c] + n[2][0][c]);
        }
        Some(out)
    });
    let gy = Grid::from_fn(w, h, |x, y| {
        let n = windows[y * w + x]?;
        let mut out = [0.0; C];
        for c in 0..C {
            out[c] = (n[2][0][c] + 2.0 * n[2][1][c] + n[2][2][c])
                - (n[0][0][c] + 2.0 * n[0][1][c] + n[0][2][c]);
        }
        Some(out)
    });
    Ok((gx, gy))
}

/// Root-sum-square of every channel's x and y Sobel response.
pub fn sobel_magnitude<const C: usize>(g: &Grid<C>) -> Result<ScalarGrid> {
    let (gx, gy) = sobel_gradients(g)?;
    Ok(ScalarGrid::from_fn(g.width(), g.height(), |x, y| {
        let (a, b) = (gx.get(x, y)?, gy.get(x, y)?);
        let s: f64 = (0..C).map(|c| a[c] * a[c] + b[c] * b[c]).sum();
        Some([s.sqrt()])
    }))
}

/// 5-point stencil: 4-neighbor sum minus 4x center.
pub fn laplacian<const C: usize>(g: &Grid<C>) -> Result<Grid<C>> {
    check_size(g, "laplacian")?;
    let (w, h) = (g.width(), g.height());
    Ok(Grid::from_fn(w, h, |x, y| {
        if x == 0 || y == 0 || x + 1 >= w || y + 1 >= h {
            return None;
        }
        let c0 = g.get(x, y)?;
        let l = g.get(x - 1, y)?;
        let r = g.get(x + 1, y)?;
        let u = g.get(x, y - 1)?;
        let d = g.get(x, y + 1)?;
        let mut out = [0.0; C];
        for c in 0..C {
            out[c] = l[c] + r[c] + u[c] + d[c] - 4.0 * c0[c];
        }
        Some(out)
    }))
}

/// Binary dilation with a `(2r+1) x (2r+1)` square structuring element.
pub fn dilate(set: &[bool], width: usize, height: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return set.to_vec();
    }
    // separable: rows then columns
    let mut rows = vec![false; set.len()];
    for y in 0..height {
        for x in 0..width {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(width - 1);
            rows[y * width + x] = (lo..=hi).any(|i| set[y * width + i]);
        }
    }
    let mut out = vec![false; set.len()];
    for y in 0..height {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(height - 1);
        for x in 0..width {
            out[y * width + x] = (lo..=hi).any(|j| rows[j * width + x]);
        }
    }
    out
}
