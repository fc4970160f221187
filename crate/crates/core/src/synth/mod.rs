//! Ray-cast ground truth for animated capsule figures: camera-space depth,
//! unit normals, foreground masks, and analytic optical flow with occlusion.

mod flow;
mod scene;
mod walker;

use std::path::Path;

pub use flow::{
    analytic_flow, analytic_flow_rendered, transport, FlowPairFields, Transport,
    OCCLUSION_TOLERANCE,
};
pub use scene::{
    cast_ray, raycast_frame, CameraSpec, Capsule, FigurePose, Hit, RenderedFrame, SceneSpec,
};
pub use walker::{make_walker, part, WalkerConfig, WalkerDraws};

use crate::error::{Error, Result};
use crate::grids::{
    save_flo, save_mask_png16, save_normal_png16, save_pfm_scalar, FrameEntry, SequenceManifest,
};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Renders every frame and flow of `scene` into `out_dir` and writes `manifest.json`.
///
/// Layout: `depth_%04d.pfm`, `normal_%04d.png`, `mask_%04d.png`, and for each
/// adjacent pair `flow_fwd_%04d.flo` / `flow_bwd_%04d.flo`.
pub fn generate_sequence(scene: &SceneSpec, out_dir: impl AsRef<Path>) -> Result<SequenceManifest> {
    scene.validate()?;
    let out = out_dir.as_ref();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (w, h) = scene.dims();
    let n = scene.frame_count();

    let renders: Vec<RenderedFrame> = (0..n).map(|k| raycast_frame(scene, k)).collect();
    let mut frames = Vec::with_capacity(n);
    for (k, r) in renders.iter().enumerate() {
        let entry = FrameEntry {
            rgb: None,
            depth: format!("depth_{k:04}.pfm"),
            normal: format!("normal_{k:04}.png"),
            mask: format!("mask_{k:04}.png"),
            intrinsics: scene.cameras[k].intrinsics(),
        };
        save_pfm_scalar(&r.depth, out.join(&entry.depth))?;
        save_normal_png16(&r.normals, out.join(&entry.normal))?;
        save_mask_png16(&r.mask, out.join(&entry.mask))?;
        frames.push(entry);
    }

    let (mut flow_fwd, mut flow_bwd) = (Vec::new(), Vec::new());
    for k in 0..n.saturating_sub(1) {
        let f = analytic_flow_rendered(scene, k, &renders[k], &renders[k + 1])?;
        let (fwd, bwd) = (
            format!("flow_fwd_{k:04}.flo"),
            format!("flow_bwd_{k:04}.flo"),
        );
        save_flo(&f.fwd.flow, out.join(&fwd))?;
        save_flo(&f.bwd.flow, out.join(&bwd))?;
        flow_fwd.push(fwd);
        flow_bwd.push(bwd);
    }

    let manifest = SequenceManifest {
        frame_count: n,
        width: w,
        height: h,
        frames,
        flow_fwd,
        flow_bwd,
    };
    let path = out.join(MANIFEST_NAME);
    std::fs::write(&path, manifest.to_json()?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
