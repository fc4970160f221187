//! Procedural eleven-capsule figure under a slowly orbiting tracking camera.
//!
//! The figure faces the camera with its limbs spread in the frontal plane, and
//! joints swing about the figure's forward axis. Keeping the motion mostly
//! parallel to the image plane limits both self-occlusion and per-frame depth
//! change, so ground truth warped by its own flow stays consistent to
//! interpolation accuracy.

use std::f64::consts::TAU;

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scene::{CameraSpec, Capsule, FigurePose, SceneSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct WalkerConfig {
    pub width: usize,
    pub height: usize,
    /// Focal length range as multiples of the image width.
    pub focal_range: (f64, f64),
    /// Fraction of the image height the standing figure spans.
    pub fill: f64,
    /// Upper bound on the camera orbit speed, degrees per frame.
    pub max_orbit_deg_per_frame: f64,
    /// Joint swing period in frames.
    pub swing_period: f64,
    pub arm_swing_deg: f64,
    pub leg_swing_deg: f64,
    /// Camera lag translation parallel to the image plane, meters.
    pub lag_amplitude: f64,
    pub lag_period: f64,
}

impl Default for WalkerConfig {
    fn default() -> Self {
        WalkerConfig {
            width: 128,
            height: 128,
            focal_range: (0.8, 1.5),
            fill: 0.78,
            max_orbit_deg_per_frame: 0.02,
            swing_period: 180.0,
            arm_swing_deg: 3.0,
            leg_swing_deg: 1.5,
            lag_amplitude: 0.005,
            lag_period: 48.0,
        }
    }
}

/// Body part ids.
pub mod part {
    pub const TORSO: u32 = 0;
    pub const HEAD: u32 = 1;
    pub const UPPER_ARM_R: u32 = 2;
    pub const FOREARM_R: u32 = 3;
    pub const UPPER_ARM_L: u32 = 4;
    pub const FOREARM_L: u32 = 5;
    pub const THIGH_R: u32 = 6;
    pub const SHIN_R: u32 = 7;
    pub const THIGH_L: u32 = 8;
    pub const SHIN_L: u32 = 9;
    pub const NECK: u32 = 10;
}

const UPPER_ARM: (f64, f64) = (0.28, 0.055);
const FOREARM: (f64, f64) = (0.26, 0.045);
const THIGH: (f64, f64) = (0.42, 0.075);
const SHIN: (f64, f64) = (0.42, 0.06);
const SHOULDER: (f64, f64) = (0.24, -0.5);
const HIP: (f64, f64) = (0.1, 0.05);
const ARM_REST_DEG: f64 = 35.0;
const ELBOW_REST_DEG: f64 = 10.0;
const LEG_REST_DEG: f64 = 9.0;
const KNEE_REST_DEG: f64 = 4.0;
/// Head top to sole, meters, at rest.
const FIGURE_HEIGHT: f64 = 1.87;
/// Vertical middle of the figure in its root frame.
const FIGURE_MID_Y: f64 = 0.0;

fn limb(length: f64, radius: f64, id: u32) -> Capsule {
    Capsule::new(Point3::origin(), Point3::new(0.0, length, 0.0), radius, id)
}

fn rest_capsules() -> Vec<Capsule> {
    vec![
        Capsule::new(
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.0, -0.5, 0.0),
            0.16,
            part::TORSO,
        ),
        Capsule::new(
            Point3::new(0.0, -0.76, 0.0),
            Point3::new(0.0, -0.82, 0.0),
            0.11,
            part::HEAD,
        ),
        limb(UPPER_ARM.0, UPPER_ARM.1, part::UPPER_ARM_R),
        limb(FOREARM.0, FOREARM.1, part::FOREARM_R),
        limb(UPPER_ARM.0, UPPER_ARM.1, part::UPPER_ARM_L),
        limb(FOREARM.0, FOREARM.1, part::FOREARM_L),
        limb(THIGH.0, THIGH.1, part::THIGH_R),
        limb(SHIN.0, SHIN.1, part::SHIN_R),
        limb(THIGH.0, THIGH.1, part::THIGH_L),
        limb(SHIN.0, SHIN.1, part::SHIN_L),
        Capsule::new(
            Point3::new(0.0, -0.55, 0.0),
            Point3::new(0.0, -0.68, 0.0),
            0.05,
            part::NECK,
        ),
    ]
}

/// Rotation in the frontal plane that tilts a limb hanging along `+y` outward
/// by `deg` on side `side` (+1 toward `+x`).
fn abduct(side: f64, deg: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), -side * deg.to_radians())
}

fn at(x: f64, y: f64) -> Isometry3<f64> {
    Isometry3::from_parts(Translation3::new(x, y, 0.0), UnitQuaternion::identity())
}

/// Per-sequence random draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkerDraws {
    pub focal: f64,
    pub yaw0: f64,
    pub orbit_deg_per_frame: f64,
    pub phases: [f64; 4],
    pub lag_phase: (f64, f64),
}

impl WalkerDraws {
    pub fn sample(seed: u64, cfg: &WalkerConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let focal = rng.random_range(cfg.focal_range.0..=cfg.focal_range.1) * cfg.width as f64;
        let yaw0 = rng.random_range(0.0..TAU);
        let orbit = rng.random_range(-cfg.max_orbit_deg_per_frame..=cfg.max_orbit_deg_per_frame);
        let phases = [(); 4].map(|_| rng.random_range(0.0..TAU));
        let lag_phase = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
        WalkerDraws {
            focal,
            yaw0,
            orbit_deg_per_frame: orbit,
            phases,
            lag_phase,
        }
    }
}

fn pose_at(k: f64, d: &WalkerDraws, cfg: &WalkerConfig) -> FigurePose {
    let root = Isometry3::from_parts(
        Translation3::identity(),
        UnitQuaternion::from_axis_angle(&Vector3::y_axis(), d.yaw0),
    );
    let swing = |amp: f64, phase: f64| amp * (TAU * k / cfg.swing_period + phase).sin();
    let torso = root;
    let head = root;
    let mut arms = Vec::new();
    for (side, phase) in [(1.0, d.phases[0]), (-1.0, d.phases[1])] {
        let angle = ARM_REST_DEG + swing(cfg.arm_swing_deg, phase);
        let upper = root * at(side * SHOULDER.0, SHOULDER.1) * abduct(side, angle);
        let elbow = ELBOW_REST_DEG + swing(0.5 * cfg.arm_swing_deg, phase + 1.0);
        let fore = upper * at(0.0, UPPER_ARM.0) * abduct(side, elbow);
        arms.push(upper);
        arms.push(fore);
    }
    let mut legs = Vec::new();
    for (side, phase) in [(1.0, d.phases[2]), (-1.0, d.phases[3])] {
        let angle = LEG_REST_DEG + swing(cfg.leg_swing_deg, phase);
        let thigh = root * at(side * HIP.0, HIP.1) * abduct(side, angle);
        let knee = KNEE_REST_DEG + swing(0.5 * cfg.leg_swing_deg, phase + 1.0);
        let shin = thigh * at(0.0, THIGH.0) * abduct(side, -knee);
        legs.push(thigh);
        legs.push(shin);
    }
    let mut transforms = vec![torso, head];
    transforms.extend(arms);
    transforms.extend(legs);
    transforms.push(root);
    FigurePose { transforms }
}

fn camera_at(k: f64, d: &WalkerDraws, cfg: &WalkerConfig) -> CameraSpec {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let distance = d.focal * FIGURE_HEIGHT / (cfg.fill * h);
    let yaw = d.yaw0 + (d.orbit_deg_per_frame * k).to_radians();
    let rot = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), yaw);
    let t = TAU * k / cfg.lag_period;
    let lag = Vector3::new(
        cfg.lag_amplitude * (t + d.lag_phase.0).sin(),
        0.5 * cfg.lag_amplitude * (t + d.lag_phase.1).sin(),
        -distance,
    );
    let target = Vector3::new(0.0, FIGURE_MID_Y, 0.0);
    let camera_to_world = Isometry3::from_parts(Translation3::from(target + rot * lag), rot);
    CameraSpec {
        fx: d.focal,
        fy: d.focal,
        cx: w / 2.0,
        cy: h / 2.0,
        pose: camera_to_world.inverse(),
        width: cfg.width,
        height: cfg.height,
    }
}

/// Deterministic walker scene with `frame_count` frames.
pub fn make_walker(seed: u64, frame_count: usize, cfg: &WalkerConfig) -> SceneSpec {
    let draws = WalkerDraws::sample(seed, cfg);
    let frames = 0..frame_count;
    SceneSpec {
        capsules: rest_capsules(),
        poses: frames
            .clone()
            .map(|k| pose_at(k as f64, &draws, cfg))
            .collect(),
        cameras: frames.map(|k| camera_at(k as f64, &draws, cfg)).collect(),
        rng_seed: seed,
    }
}
