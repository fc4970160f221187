//! Channel weight adaptation (squeeze, two-layer MLP, sigmoid gate) and
//! additive prior fusion, with analytic gradients for verification.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `C x H x W` feature map stored channel-major, then row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVolume {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl FeatureVolume {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "{channels}x{height}x{width} volume needs {} values, got {}",
                channels * height * width,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "feature values must be finite".into(),
            ));
        }
        Ok(FeatureVolume {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        FeatureVolume {
            channels,
            height,
            width,
            values: vec![0.0; channels * height * width],
        }
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    values.push(f(c, y, x));
                }
            }
        }
        FeatureVolume {
            channels,
            height,
            width,
            values,
        }
    }

    /// Entries drawn uniformly from `[-1, 1)`.
    pub fn random(channels: usize, height: usize, width: usize, rng: &mut impl Rng) -> Self {
        Self::from_fn(channels, height, width, |_, _, _| {
            rng.random_range(-1.0..1.0)
        })
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.values[(c * self.height + y) * self.width + x]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.values[c * n..(c + 1) * n]
    }

    fn ensure_same_shape(&self, other: &FeatureVolume, what: &str) -> Result<()> {
        if (self.channels, self.height, self.width) != (other.channels, other.height, other.width) {
            return Err(Error::Shape(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.channels, self.height, self.width, other.channels, other.height, other.width
            )));
        }
        Ok(())
    }
}

/// Spatial mean of every channel.
pub fn gap(f: &FeatureVolume) -> Result<Vec<f64>> {
    if f.plane_len() == 0 || f.channels == 0 {
        return Err(Error::Empty("gap: empty feature volume".into()));
    }
    let n = f.plane_len() as f64;
    Ok((0..f.channels)
        .map(|c| f.channel(c).iter().sum::<f64>() / n)
        .collect())
}

/// Squeeze width `ceil(C / 4)`.
pub fn default_hidden(channels: usize) -> usize {
    channels.div_ceil(4).max(1)
}

/// MLP weights, matrices row-major: `w1` is `hidden x channels`, `w2` is `channels x hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwaParams {
    pub channels: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl CwaParams {
    pub fn zeros(channels: usize, hidden: usize) -> Self {
        CwaParams {
            channels,
            hidden,
            w1: vec![0.0; hidden * channels],
            b1: vec![0.0; hidden],
            w2: vec![0.0; channels * hidden],
            b2: vec![0.0; channels],
        }
    }

    /// Entries drawn uniformly from `[-1, 1)`.
    pub fn random(channels: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut draw = |n: usize| {
            (0..n)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect::<Vec<f64>>()
        };
        CwaParams {
            channels,
            hidden,
            w1: draw(hidden * channels),
            b1: draw(hidden),
            w2: draw(channels * hidden),
            b2: draw(channels),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (c, h) = (self.channels, self.hidden);
        if h == 0 {
            return Err(Error::InvalidArgument(
                "cwa hidden width must be >= 1".into(),
            ));
        }
        if self.w1.len() != h * c
            || self.b1.len() != h
            || self.w2.len() != c * h
            || self.b2.len() != c
        {
            return Err(Error::Shape(format!(
                "cwa params for C={c}, hidden={h}: w1 {}, b1 {}, w2 {}, b2 {}",
                self.w1.len(),
                self.b1.len(),
                self.w2.len(),
                self.b2.len()
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: CwaParams = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Forward activations, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CwaForward {
    pub output: FeatureVolume,
    /// Per-channel gate `a`.
    pub attention: Vec<f64>,
    pub pooled: Vec<f64>,
    pub hidden_pre: Vec<f64>,
}

/// `F'(c,y,x) = a_c F(c,y,x)` with `a = sigmoid(W2 relu(W1 gap(F) + b1) + b2)`.
pub fn cwa_forward(f: &FeatureVolume, p: &CwaParams) -> Result<CwaForward> {
    p.validate()?;
    if f.channels != p.channels {
        return Err(Error::Shape(format!(
            "cwa: volume has {} channels, params expect {}",
            f.channels, p.channels
        )));
    }
    let q = gap(f)?;
    let (c, h) = (p.channels, p.hidden);
    let hidden_pre: Vec<f64> = (0..h)
        .map(|j| p.b1[j] + (0..c).map(|i| p.w1[j * c + i] * q[i]).sum::<f64>())
        .collect();
    let attention: Vec<f64> = (0..c)
        .map(|i| {
            sigmoid(
                p.b2[i]
                    + (0..h)
                        .map(|j| p.w2[i * h + j] * hidden_pre[j].max(0.0))
                        .sum::<f64>(),
            )
        })
        .collect();
    let n = f.plane_len();
    let values = f
        .values
        .iter()
        .enumerate()
        .map(|(k, v)| attention[k / n] * v)
        .collect();
    Ok(CwaForward {
        output: FeatureVolume {
            values,
            ..f.clone()
        },
        attention,
        pooled: q,
        hidden_pre,
    })
}

/// Gradients of `<upstream, F'>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwaGrads {
    pub input: FeatureVolume,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl CwaGrads {
    /// Every gradient entry, input first, then `w1, b1, w2, b2`.
    pub fn flatten(&self) -> Vec<f64> {
        [&self.input.values, &self.w1, &self.b1, &self.w2, &self.b2]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }
}

/// Reverse-mode gradients of `<upstream, cwa_forward(f, p).output>`.
///
/// With `detach_gate`, the gate is treated as a constant when differentiating
/// with respect to the input, so `d/dF(c,y,x) = a_c * upstream(c,y,x)`.
pub fn cwa_grad(
    f: &FeatureVolume,
    p: &CwaParams,
    upstream: &FeatureVolume,
    detach_gate: bool,
) -> Result<CwaGrads> {
    f.ensure_same_shape(upstream, "cwa_grad upstream")?;
    let fw = cwa_forward(f, p)?;
    let (c, h, n) = (p.channels, p.hidden, f.plane_len());
    let a = &fw.attention;

    // d/da_c = sum over the plane of upstream * F
    let dz: Vec<f64> = (0..c)
        .map(|i| {
            let g: f64 = upstream
                .channel(i)
                .iter()
                .zip(f.channel(i))
                .map(|(u, v)| u * v)
                .sum();
            g * a[i] * (1.0 - a[i])
        })
        .collect();
    let relu: Vec<f64> = fw.hidden_pre.iter().map(|v| v.max(0.0)).collect();
    let mut w2 = vec![0.0; c * h];
    for i in 0..c {
        for j in 0..h {
            w2[i * h + j] = dz[i] * relu[j];
        }
    }
    let dh_pre: Vec<f64> = (0..h)
        .map(|j| {
            if fw.hidden_pre[j] > 0.0 {
                (0..c).map(|i| p.w2[i * h + j] * dz[i]).sum()
            } else {
                0.0
            }
        })
        .collect();
    let mut w1 = vec![0.0; h * c];
    for j in 0..h {
        for i in 0..c {
            w1[j * c + i] = dh_pre[j] * fw.pooled[i];
        }
    }
    let dq: Vec<f64> = (0..c)
        .map(|i| (0..h).map(|j| p.w1[j * c + i] * dh_pre[j]).sum())
        .collect();
    let input = upstream
        .values
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let ch = k / n;
            let through_gate = if detach_gate { 0.0 } else { dq[ch] / n as f64 };
            a[ch] * u + through_gate
        })
        .collect();
    Ok(CwaGrads {
        input: FeatureVolume {
            values: input,
            ..f.clone()
        },
        w1,
        b1: dh_pre,
        w2,
        b2: dz,
    })
}

fn objective(f: &FeatureVolume, p: &CwaParams, upstream: &FeatureVolume) -> Result<f64> {
    let out = cwa_forward(f, p)?.output;
    Ok(out
        .values
        .iter()
        .zip(&upstream.values)
        .map(|(a, b)| a * b)
        .sum())
}

/// Central differences of `<upstream, F'>` with step `h`, laid out like [`cwa_grad`].
pub fn cwa_finite_difference(
    f: &FeatureVolume,
    p: &CwaParams,
    upstream: &FeatureVolume,
    h: f64,
) -> Result<CwaGrads> {
    f.ensure_same_shape(upstream, "cwa_finite_difference upstream")?;
    let mut input = f.clone();
    for k in 0..f.values.len() {
        let mut fp = f.clone();
        fp.values[k] += h;
        let mut fm = f.clone();
        fm.values[k] -= h;
        input.values[k] = (objective(&fp, p, upstream)? - objective(&fm, p, upstream)?) / (2.0 * h);
    }
    let param = |get: fn(&mut CwaParams) -> &mut Vec<f64>| -> Result<Vec<f64>> {
        let len = get(&mut p.clone()).len();
        (0..len)
            .map(|k| {
                let mut pp = p.clone();
                get(&mut pp)[k] += h;
                let mut pm = p.clone();
                get(&mut pm)[k] -= h;
                Ok((objective(f, &pp, upstream)? - objective(f, &pm, upstream)?) / (2.0 * h))
            })
            .collect()
    };
    Ok(CwaGrads {
        input,
        w1: param(|p| &mut p.w1)?,
        b1: param(|p| &mut p.b1)?,
        w2: param(|p| &mut p.w2)?,
        b2: param(|p| &mut p.b2)?,
    })
}

/// Floor on the relative-error denominator, so entries that are both near zero compare absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// `max |a - b| / max(|a|, |b|, REL_ERROR_FLOOR)` over all gradient entries.
pub fn max_relative_error(analytic: &CwaGrads, numeric: &CwaGrads) -> f64 {
    analytic
        .flatten()
        .iter()
        .zip(numeric.flatten())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_ERROR_FLOOR))
        .fold(0.0, f64::max)
}

/// Bilinear resize with half-pixel centers (`align_corners = false`): output
/// index `i` samples source coordinate `(i + 0.5) * in / out - 0.5`, clamped to the grid.
pub fn bilinear_resize(f: &FeatureVolume, out_h: usize, out_w: usize) -> Result<FeatureVolume> {
    if out_h == 0 || out_w == 0 || f.height == 0 || f.width == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize {}x{} -> {out_h}x{out_w}: sizes must be >= 1",
            f.height, f.width
        )));
    }
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|i| {
                let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let ty = taps(out_h, f.height);
    let tx = taps(out_w, f.width);
    Ok(FeatureVolume::from_fn(
        f.channels,
        out_h,
        out_w,
        |c, y, x| {
            let (y0, y1, fy) = ty[y];
            let (x0, x1, fx) = tx[x];
            let top = f.at(c, y0, x0) * (1.0 - fx) + f.at(c, y0, x1) * fx;
            let bottom = f.at(c, y1, x0) * (1.0 - fx) + f.at(c, y1, x1) * fx;
            top * (1.0 - fy) + bottom * fy
        },
    ))
}

/// A 1x1 convolution `P z + b` (`p` is `c_out x c_in`, row-major) followed by
/// a bilinear resize to `out_h x out_w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorProjection {
    pub c_in: usize,
    pub c_out: usize,
    pub p: Vec<f64>,
    pub b: Vec<f64>,
    pub out_h: usize,
    pub out_w: usize,
}

impl PriorProjection {
    pub fn zeros(c_in: usize, c_out: usize, out_h: usize, out_w: usize) -> Self {
        PriorProjection {
            c_in,
            c_out,
            p: vec![0.0; c_out * c_in],
            b: vec![0.0; c_out],
            out_h,
            out_w,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.len() != self.c_out * self.c_in || self.b.len() != self.c_out {
            return Err(Error::Shape(format!(
                "projection {}->{}: p has {}, b has {}",
                self.c_in,
                self.c_out,
                self.p.len(),
                self.b.len()
            )));
        }
        Ok(())
    }

    /// Projects and resizes the prior features.
    pub fn apply(&self, z: &FeatureVolume) -> Result<FeatureVolume> {
        self.validate()?;
        if z.channels != self.c_in {
            return Err(Error::Shape(format!(
                "projection expects {} input channels, got {}",
                self.c_in, z.channels
            )));
        }
        let projected = FeatureVolume::from_fn(self.c_out, z.height, z.width, |o, y, x| {
            self.b[o]
                + (0..self.c_in)
                    .map(|i| self.p[o * self.c_in + i] * z.at(i, y, x))
                    .sum::<f64>()
        });
        bilinear_resize(&projected, self.out_h, self.out_w)
    }
}

/// `F_dpt + resize(P z + b)`.
pub fn prior_fuse(
    f_dpt: &FeatureVolume,
    z: &FeatureVolume,
    proj: &PriorProjection,
) -> Result<FeatureVolume> {
    if (proj.c_out, proj.out_h, proj.out_w) != (f_dpt.channels, f_dpt.height, f_dpt.width) {
        return Err(Error::Shape(format!(
            "projection produces {}x{}x{}, decoder features are {}x{}x{}",
            proj.c_out, proj.out_h, proj.out_w, f_dpt.channels, f_dpt.height, f_dpt.width
        )));
    }
    let prior = proj.apply(z)?;
    let values = f_dpt
        .values
        .iter()
        .zip(&prior.values)
        .map(|(a, b)| a + b)
        .collect();
    Ok(FeatureVolume {
        values,
        ..f_dpt.clone()
    })
}
