use nalgebra::Point3;

use super::scene::{cast_ray, raycast_frame, RenderedFrame, SceneSpec};
use crate::error::{Error, Result};
use crate::grids::{FlowGrid, ScalarGrid};

/// Depth tolerance of the visibility test, meters.
pub const OCCLUSION_TOLERANCE: f64 = 1e-4;

/// Per-pixel transport of frame `src`'s surface into frame `dst`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transport {
    pub flow: FlowGrid,
    /// Valid on hit pixels: 1 when the transported point is hidden, behind the
    /// camera, or outside the image; 0 when it stays visible.
    pub occluded: ScalarGrid,
    /// Camera-space depth of each transported point in frame `dst`, where visible.
    pub transported_depth: ScalarGrid,
}

/// Moves every surface point hit in `src` rigidly with its capsule to frame
/// `dst` and reprojects it. Flow is left invalid where the point is not visible
/// in `dst` (see [`Transport::occluded`]).
pub fn transport(
    scene: &SceneSpec,
    src: usize,
    src_render: &RenderedFrame,
    dst: usize,
    tolerance: f64,
) -> Transport {
    let cam = &scene.cameras[dst];
    let (w, h) = (cam.width, cam.height);
    let dst_caps = scene.camera_capsules(dst);
    let moves: Vec<_> = (0..scene.capsules.len())
        .map(|i| scene.camera_from_local(dst, i) * scene.camera_from_local(src, i).inverse())
        .collect();

    let mut flow = vec![None; w * h];
    let mut occluded = vec![None; w * h];
    let mut depth = vec![None; w * h];
    for (idx, hit) in src_render.hits.iter().enumerate() {
        let Some(hit) = hit else { continue };
        let moved: Point3<f64> = moves[hit.capsule] * hit.point;
        let visible = cam.project(&moved).filter(|&(u, v)| {
            (0.0..=(w - 1) as f64).contains(&u)
                && (0.0..=(h - 1) as f64).contains(&v)
                && cast_ray(&dst_caps, cam, u, v)
                    .is_some_and(|first| (first.point.z - moved.z).abs() <= tolerance)
        });
        occluded[idx] = Some([if visible.is_some() { 0.0 } else { 1.0 }]);
        if let Some((u, v)) = visible {
            flow[idx] = Some([u - (idx % w) as f64, v - (idx / w) as f64]);
            depth[idx] = Some([moved.z]);
        }
    }
    Transport {
        flow: FlowGrid::from_fn(w, h, |x, y| flow[y * w + x]),
        occluded: ScalarGrid::from_fn(w, h, |x, y| occluded[y * w + x]),
        transported_depth: ScalarGrid::from_fn(w, h, |x, y| depth[y * w + x]),
    }
}

/// Forward (`k -> k+1`) and backward (`k+1 -> k`) transports.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPairFields {
    pub fwd: Transport,
    pub bwd: Transport,
}

fn check_pair(scene: &SceneSpec, k: usize) -> Result<()> {
    if k + 1 >= scene.frame_count() {
        return Err(Error::InvalidArgument(format!(
            "no frame {} after frame {k} (scene has {})",
            k + 1,
            scene.frame_count()
        )));
    }
    Ok(())
}

/// Analytic flows between frames `k` and `k+1`, given both renders.
pub fn analytic_flow_rendered(
    scene: &SceneSpec,
    k: usize,
    render_k: &RenderedFrame,
    render_k1: &RenderedFrame,
) -> Result<FlowPairFields> {
    check_pair(scene, k)?;
    Ok(FlowPairFields {
        fwd: transport(scene, k, render_k, k + 1, OCCLUSION_TOLERANCE),
        bwd: transport(scene, k + 1, render_k1, k, OCCLUSION_TOLERANCE),
    })
}

/// Analytic flows between frames `k` and `k+1`.
pub fn analytic_flow(scene: &SceneSpec, k: usize) -> Result<FlowPairFields> {
    check_pair(scene, k)?;
    analytic_flow_rendered(
        scene,
        k,
        &raycast_frame(scene, k),
        &raycast_frame(scene, k + 1),
    )
}
