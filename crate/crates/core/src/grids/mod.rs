//! Raster data model and file codecs for depth, normals, masks, and flow.

pub mod flo;
mod grid;
pub mod manifest;
pub mod pfm;
pub mod png16;
mod sample;

pub use flo::{load_flo, save_flo};
pub use grid::{dot3, norm3, normalize3, FlowGrid, Grid, NormalGrid, ScalarGrid};
pub use manifest::{FrameEntry, Intrinsics, Sequence, SequenceManifest};
pub use pfm::{load_pfm, save_pfm_scalar, save_pfm_vector, PfmGrid};
pub use png16::{load_mask_png16, load_normal_png16, save_mask_png16, save_normal_png16};
pub use sample::bilinear_sample;
