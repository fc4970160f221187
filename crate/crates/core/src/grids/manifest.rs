//! Per-sequence JSON manifest.
//!
//! ```json
//! {
//!   "frame_count": 2,
//!   "width": 128,
//!   "height": 128,
//!   "frames": [
//!     { "rgb": null, "depth": "depth_0000.pfm", "normal": "normal_0000.png",
//!       "mask": "mask_0000.png", "intrinsics": { "fx": 140.0, "fy": 140.0, "cx": 64.0, "cy": 64.0 } }
//!   ],
//!   "flow_fwd": ["flow_fwd_0000.flo"],
//!   "flow_bwd": ["flow_bwd_0000.flo"]
//! }
//! ```
//!
//! Paths are relative to the manifest's directory. `flow_fwd[k]` maps frame
//! `k` to `k+1`; `flow_bwd[k]` maps frame `k+1` back to `k`. Depth may be a
//! grayscale PFM; normals either a 16-bit RGB PNG or a three-channel PFM;
//! masks a 16-bit grayscale PNG or a grayscale PFM.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::flo::load_flo;
use super::grid::{FlowGrid, NormalGrid, ScalarGrid};
use super::pfm::load_pfm;
use super::png16::{load_mask_png16, load_normal_png16};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    #[serde(default)]
    pub rgb: Option<String>,
    pub depth: String,
    pub normal: String,
    pub mask: String,
    pub intrinsics: Intrinsics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    pub frames: Vec<FrameEntry>,
    #[serde(default)]
    pub flow_fwd: Vec<String>,
    #[serde(default)]
    pub flow_bwd: Vec<String>,
}

fn is_ext(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn check_dims(path: &Path, got: (usize, usize), want: (usize, usize)) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "{} is {}x{}, manifest says {}x{}",
            path.display(),
            got.0,
            got.1,
            want.0,
            want.1
        )))
    }
}

pub fn load_depth(path: &Path) -> Result<ScalarGrid> {
    load_pfm(path)?.into_scalar()
}

pub fn load_normals(path: &Path) -> Result<NormalGrid> {
    if is_ext(path, "pfm") {
        Ok(load_pfm(path)?
            .into_vector()?
            .normalized(super::png16::MIN_DECODED_NORM))
    } else {
        load_normal_png16(path)
    }
}

pub fn load_mask(path: &Path) -> Result<ScalarGrid> {
    if is_ext(path, "pfm") {
        load_pfm(path)?.into_scalar()
    } else {
        load_mask_png16(path)
    }
}

/// A manifest bound to the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub manifest: SequenceManifest,
    pub root: PathBuf,
}

impl SequenceManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Structural checks that need no file access.
    pub fn check_structure(&self) -> Result<()> {
        if self.frame_count == 0 || self.frames.len() != self.frame_count {
            return Err(Error::InvalidArgument(format!(
                "frame_count {} but {} frame entries",
                self.frame_count,
                self.frames.len()
            )));
        }
        let pairs = self.frame_count - 1;
        for (name, list) in [("flow_fwd", &self.flow_fwd), ("flow_bwd", &self.flow_bwd)] {
            if !list.is_empty() && list.len() != pairs {
                return Err(Error::InvalidArgument(format!(
                    "{name} has {} entries, expected {pairs}",
                    list.len()
                )));
            }
        }
        if self.flow_fwd.len() != self.flow_bwd.len() {
            return Err(Error::InvalidArgument(
                "flow_fwd and flow_bwd differ in length".into(),
            ));
        }
        Ok(())
    }

    pub fn has_flows(&self) -> bool {
        self.frame_count >= 2 && self.flow_fwd.len() == self.frame_count - 1
    }
}

impl Sequence {
    pub fn open(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let path = manifest_path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest = SequenceManifest::from_json(&text)?;
        manifest.check_structure()?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Sequence { manifest, root })
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn dims(&self) -> (usize, usize) {
        (self.manifest.width, self.manifest.height)
    }

    fn frame(&self, k: usize) -> Result<&FrameEntry> {
        self.manifest
            .frames
            .get(k)
            .ok_or_else(|| Error::InvalidArgument(format!("frame {k} out of range")))
    }

    fn checked<T>(
        &self,
        rel: &str,
        load: impl Fn(&Path) -> Result<T>,
        dims: impl Fn(&T) -> (usize, usize),
    ) -> Result<T> {
        let p = self.resolve(rel);
        if !p.exists() {
            return Err(Error::io(
                &p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "missing file"),
            ));
        }
        let g = load(&p)?;
        check_dims(&p, dims(&g), self.dims())?;
        Ok(g)
    }

    pub fn depth(&self, k: usize) -> Result<ScalarGrid> {
        self.checked(&self.frame(k)?.depth, load_depth, |g| {
            (g.width(), g.height())
        })
    }

    pub fn normal(&self, k: usize) -> Result<NormalGrid> {
        self.checked(&self.frame(k)?.normal, load_normals, |g| {
            (g.width(), g.height())
        })
    }

    pub fn mask(&self, k: usize) -> Result<ScalarGrid> {
        self.checked(&self.frame(k)?.mask, load_mask, |g| (g.width(), g.height()))
    }

    fn flow(&self, list: &[String], k: usize, dir: &str) -> Result<FlowGrid> {
        let rel = list.get(k).ok_or_else(|| {
            Error::InvalidArgument(format!("sequence has no {dir} flow for pair {k}"))
        })?;
        self.checked(rel, |p| load_flo(p), |g| (g.width(), g.height()))
    }

    pub fn flow_fwd(&self, k: usize) -> Result<FlowGrid> {
        self.flow(&self.manifest.flow_fwd, k, "forward")
    }

    pub fn flow_bwd(&self, k: usize) -> Result<FlowGrid> {
        self.flow(&self.manifest.flow_bwd, k, "backward")
    }

    /// Full check: every referenced file exists, decodes, and matches the manifest size.
    pub fn validate(&self) -> Result<()> {
        for k in 0..self.manifest.frame_count {
            self.depth(k)?;
            self.normal(k)?;
            self.mask(k)?;
            if let Some(rgb) = &self.frame(k)?.rgb {
                let p = self.resolve(rgb);
                if !p.exists() {
                    return Err(Error::io(
                        &p,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "missing file"),
                    ));
                }
            }
        }
        for k in 0..self.manifest.flow_fwd.len() {
            self.flow_fwd(k)?;
            self.flow_bwd(k)?;
        }
        Ok(())
    }
}
