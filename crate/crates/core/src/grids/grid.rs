use crate::error::{Error, Result};

/// Row-major raster of `C`-component samples with an explicit validity plane.
///
/// Pixel centers sit at integer coordinates, origin top-left, `+y` downward.
/// Invalid pixels always store zeros, so two grids compare equal exactly when
/// their valid samples and validity planes agree.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<const C: usize> {
    width: usize,
    height: usize,
    values: Vec<[f64; C]>,
    valid: Vec<bool>,
}

/// Depth maps, soft masks, weight maps.
pub type ScalarGrid = Grid<1>;
/// Optical flow in pixels: `u` rightward, `v` downward.
pub type FlowGrid = Grid<2>;
/// Unit surface normals.
pub type NormalGrid = Grid<3>;

impl<const C: usize> Grid<C> {
    pub fn new(
        width: usize,
        height: usize,
        values: Vec<[f64; C]>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = width * height;
        if values.len() != n || valid.len() != n {
            return Err(Error::Shape(format!(
                "{}x{} grid needs {} samples, got {} values and {} validity flags",
                width,
                height,
                n,
                values.len(),
                valid.len()
            )));
        }
        let mut grid = Grid {
            width,
            height,
            values,
            valid,
        };
        grid.scrub();
        Ok(grid)
    }

    /// Builds a grid from a per-pixel closure; `None` marks the pixel invalid.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> Option<[f64; C]>,
    ) -> Self {
        let n = width * height;
        let mut values = Vec::with_capacity(n);
        let mut valid = Vec::with_capacity(n);
        for y in 0..height {
            for x in 0..width {
                match f(x, y) {
                    Some(v) => {
                        values.push(v);
                        valid.push(true);
                    }
                    None => {
                        values.push([0.0; C]);
                        valid.push(false);
                    }
                }
            }
        }
        Grid {
            width,
            height,
            values,
            valid,
        }
    }

    pub fn filled(width: usize, height: usize, value: [f64; C]) -> Self {
        Self::from_fn(width, height, |_, _| Some(value))
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        Self::from_fn(width, height, |_, _| None)
    }

    fn scrub(&mut self) {
        for (v, &ok) in self.values.iter_mut().zip(&self.valid) {
            if !ok {
                *v = [0.0; C];
            }
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[[f64; C]] {
        &self.values
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[self.index(x, y)]
    }

    /// Sample at integer pixel `(x, y)`; `None` when invalid.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<[f64; C]> {
        let i = self.index(x, y);
        self.valid[i].then(|| self.values[i])
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> Option<[f64; C]> {
        self.valid[i].then(|| self.values[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn same_shape<const D: usize>(&self, other: &Grid<D>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn ensure_same_shape<const D: usize>(&self, other: &Grid<D>, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    /// Applies `f` to every valid sample; a `None` result invalidates the pixel.
    pub fn map<const D: usize>(&self, mut f: impl FnMut([f64; C]) -> Option<[f64; D]>) -> Grid<D> {
        Grid::from_fn(self.width, self.height, |x, y| {
            self.get(x, y).and_then(&mut f)
        })
    }

    /// Invalidates every pixel where `keep` is false.
    pub fn restrict(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mut out = self.clone();
        for i in 0..out.len() {
            if !keep(i) {
                out.valid[i] = false;
                out.values[i] = [0.0; C];
            }
        }
        out
    }

    /// 2x average-pool. A pooled pixel is valid only when all four sources are.
    pub fn downsample2(&self) -> Self {
        let (w, h) = (self.width / 2, self.height / 2);
        Grid::from_fn(w, h, |x, y| {
            let mut acc = [0.0; C];
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let v = self.get(2 * x + dx, 2 * y + dy)?;
                for c in 0..C {
                    acc[c] += v[c];
                }
            }
            Some(acc.map(|a| a * 0.25))
        })
    }
}

impl Grid<1> {
    pub fn from_scalars(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let valid = vec![true; values.len()];
        Self::new(
            width,
            height,
            values.into_iter().map(|v| [v]).collect(),
            valid,
        )
    }

    pub fn from_scalars_masked(
        width: usize,
        height: usize,
        values: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        Self::new(
            width,
            height,
            values.into_iter().map(|v| [v]).collect(),
            valid,
        )
    }

    #[inline]
    pub fn scalar(&self, x: usize, y: usize) -> Option<f64> {
        self.get(x, y).map(|v| v[0])
    }

    #[inline]
    pub fn scalar_at(&self, i: usize) -> Option<f64> {
        self.get_index(i).map(|v| v[0])
    }

    /// Valid samples flattened; invalid pixels read as zero.
    pub fn scalars(&self) -> Vec<f64> {
        self.values.iter().map(|v| v[0]).collect()
    }

    /// Min and max over valid samples.
    pub fn valid_range(&self) -> Option<(f64, f64)> {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .fold(None, |acc, (v, _)| match acc {
                None => Some((v[0], v[0])),
                Some((lo, hi)) => Some((lo.min(v[0]), hi.max(v[0]))),
            })
    }
}

impl Grid<3> {
    /// Largest deviation of a valid sample's norm from 1.
    pub fn max_unit_deviation(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .map(|(v, _)| (norm3(v) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Renormalizes every valid vector; vectors shorter than `min_norm` become invalid.
    pub fn normalized(&self, min_norm: f64) -> Self {
        self.map(|v| normalize3(v, min_norm))
    }
}

#[inline]
pub fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[inline]
pub fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn normalize3(v: [f64; 3], min_norm: f64) -> Option<[f64; 3]> {
    let n = norm3(&v);
    (n >= min_norm && n.is_finite()).then(|| [v[0] / n, v[1] / n, v[2] / n])
}
