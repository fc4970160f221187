use nalgebra::{Isometry3, Point3, Vector3};

use crate::error::{Error, Result};
use crate::grids::{Intrinsics, NormalGrid, ScalarGrid};

/// A segment swept by a sphere, in its body part's local frame.
///
/// Equal endpoints give a sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct Capsule {
    pub a: Point3<f64>,
    pub b: Point3<f64>,
    pub radius: f64,
    pub part: u32,
}

impl Capsule {
    pub fn new(a: Point3<f64>, b: Point3<f64>, radius: f64, part: u32) -> Self {
        Capsule { a, b, radius, part }
    }

    pub fn sphere(center: Point3<f64>, radius: f64, part: u32) -> Self {
        Capsule::new(center, center, radius, part)
    }

    /// The same capsule with both endpoints mapped through `t`.
    pub fn transformed(&self, t: &Isometry3<f64>) -> Capsule {
        Capsule {
            a: t * self.a,
            b: t * self.b,
            ..self.clone()
        }
    }

    /// Nearest point on the core segment.
    pub fn closest_on_segment(&self, p: &Point3<f64>) -> Point3<f64> {
        let ba = self.b - self.a;
        let len2 = ba.norm_squared();
        if len2 == 0.0 {
            return self.a;
        }
        let h = ((p - self.a).dot(&ba) / len2).clamp(0.0, 1.0);
        self.a + ba * h
    }

    /// Signed distance from `p` to the surface.
    pub fn sdf(&self, p: &Point3<f64>) -> f64 {
        (p - self.closest_on_segment(p)).norm() - self.radius
    }

    /// Unit outward normal at a surface point.
    pub fn normal_at(&self, p: &Point3<f64>) -> Vector3<f64> {
        (p - self.closest_on_segment(p)).normalize()
    }

    /// Smallest `t > 0` with `origin + t*dir` on the surface, for an origin outside the capsule.
    pub fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let mut best = sphere_entry(&self.a, self.radius, origin, dir);
        if self.a != self.b {
            best = min_opt(best, sphere_entry(&self.b, self.radius, origin, dir));
            best = min_opt(best, self.cylinder_entry(origin, dir));
        }
        best
    }

    /// Entry through the lateral surface of the infinite cylinder, kept only
    /// when it lies between the end planes.
    fn cylinder_entry(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let ba = self.b - self.a;
        let oa = origin - self.a;
        let baba = ba.norm_squared();
        let bard = ba.dot(dir);
        let baoa = ba.dot(&oa);
        let qa = baba * dir.norm_squared() - bard * bard;
        let qb = baba * oa.dot(dir) - baoa * bard;
        let qc = baba * oa.norm_squared() - baoa * baoa - self.radius * self.radius * baba;
        if qa <= 0.0 {
            return None;
        }
        let disc = qb * qb - qa * qc;
        if disc < 0.0 {
            return None;
        }
        let t = (-qb - disc.sqrt()) / qa;
        let y = baoa + t * bard;
        (t > 0.0 && y > 0.0 && y < baba).then_some(t)
    }
}

fn sphere_entry(
    center: &Point3<f64>,
    r: f64,
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
) -> Option<f64> {
    let oc = origin - center;
    let a = dir.norm_squared();
    let b = oc.dot(dir);
    let c = oc.norm_squared() - r * r;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / a;
    (t > 0.0).then_some(t)
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Per-capsule rigid transforms (local to world) at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FigurePose {
    pub transforms: Vec<Isometry3<f64>>,
}

/// Pinhole camera; `pose` maps world to camera coordinates (`x` right, `y` down, `z` forward).
#[derive(Debug, Clone, PartialEq)]
pub struct CameraSpec {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub pose: Isometry3<f64>,
    pub width: usize,
    pub height: usize,
}

impl CameraSpec {
    /// Ray direction through pixel coordinates `(u, v)`, scaled so its `z` is 1.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    pub fn project(&self, p: &Point3<f64>) -> Option<(f64, f64)> {
        (p.z > 0.0).then(|| (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub capsules: Vec<Capsule>,
    pub poses: Vec<FigurePose>,
    pub cameras: Vec<CameraSpec>,
    pub rng_seed: u64,
}

impl SceneSpec {
    pub fn frame_count(&self) -> usize {
        self.poses.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.poses.is_empty() || self.poses.len() != self.cameras.len() {
            return Err(Error::InvalidArgument(format!(
                "scene needs matching non-empty pose and camera lists, got {} and {}",
                self.poses.len(),
                self.cameras.len()
            )));
        }
        for (k, p) in self.poses.iter().enumerate() {
            if p.transforms.len() != self.capsules.len() {
                return Err(Error::InvalidArgument(format!(
                    "frame {k} has {} transforms for {} capsules",
                    p.transforms.len(),
                    self.capsules.len()
                )));
            }
        }
        for c in &self.capsules {
            if !(c.radius > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "capsule radius must be > 0, got {}",
                    c.radius
                )));
            }
        }
        let (w, h) = (self.cameras[0].width, self.cameras[0].height);
        for (k, cam) in self.cameras.iter().enumerate() {
            let ok = cam.fx > 0.0
                && cam.fy > 0.0
                && (0.0..w as f64).contains(&cam.cx)
                && (0.0..h as f64).contains(&cam.cy)
                && (cam.width, cam.height) == (w, h)
                && w > 0
                && h > 0;
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "camera {k} is malformed: {cam:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.cameras[0].width, self.cameras[0].height)
    }

    /// Capsules placed in camera coordinates for frame `k`.
    pub fn camera_capsules(&self, k: usize) -> Vec<Capsule> {
        let cam = &self.cameras[k].pose;
        self.capsules
            .iter()
            .zip(&self.poses[k].transforms)
            .map(|(c, t)| c.transformed(&(cam * t)))
            .collect()
    }

    /// Camera-from-local transform of capsule `i` at frame `k`.
    pub fn camera_from_local(&self, k: usize, i: usize) -> Isometry3<f64> {
        self.cameras[k].pose * self.poses[k].transforms[i]
    }
}

/// First surface hit of one camera ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub capsule: usize,
    /// Hit point in camera coordinates; its `z` is the depth.
    pub point: Point3<f64>,
    pub normal: Vector3<f64>,
}

/// Closest hit along the ray through `(u, v)` against capsules already in camera coordinates.
pub fn cast_ray(capsules: &[Capsule], cam: &CameraSpec, u: f64, v: f64) -> Option<Hit> {
    let origin = Point3::origin();
    let dir = cam.ray(u, v);
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in capsules.iter().enumerate() {
        if let Some(t) = c.intersect(&origin, &dir) {
            if best.is_none_or(|(_, bt)| t < bt) {
                best = Some((i, t));
            }
        }
    }
    let (i, t) = best?;
    let point = origin + dir * t;
    Some(Hit {
        capsule: i,
        point,
        normal: capsules[i].normal_at(&point),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub depth: ScalarGrid,
    pub normals: NormalGrid,
    pub mask: ScalarGrid,
    pub hits: Vec<Option<Hit>>,
}

/// Ray casts frame `k` at every pixel center.
pub fn raycast_frame(scene: &SceneSpec, k: usize) -> RenderedFrame {
    let cam = &scene.cameras[k];
    let caps = scene.camera_capsules(k);
    let (w, h) = (cam.width, cam.height);
    let hits: Vec<Option<Hit>> = (0..w * h)
        .map(|i| cast_ray(&caps, cam, (i % w) as f64, (i / w) as f64))
        .collect();
    let depth = ScalarGrid::from_fn(w, h, |x, y| hits[y * w + x].map(|h| [h.point.z]));
    let normals = NormalGrid::from_fn(w, h, |x, y| {
        hits[y * w + x].map(|h| [h.normal.x, h.normal.y, h.normal.z])
    });
    let mask = ScalarGrid::from_fn(w, h, |x, y| {
        Some([if hits[y * w + x].is_some() { 1.0 } else { 0.0 }])
    });
    RenderedFrame {
        depth,
        normals,
        mask,
        hits,
    }
}
