//! Compiles a validated affordance answer into an executable motion: 3D
//! points, a top-down grasp, an oriented via-point path for the function
//! point, and a stream of 7-dimensional actions.

mod trajectory;

use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use trajectory::{
    actions_to_jsonl, integrate, interpolate, interpolate_waypoints, trapezoid_duration, Action, Phase,
    PhaseTrajectory, Trajectory,
};

use crate::geometry::{
    nearest_grasp, sample_antipodal_grasps, BinaryMask, CameraModel, DepthImage, GeometryError, GraspConfig,
    Pixel, Point3, Vector3,
};
use crate::marks::{resolve_selection, sample_point_in_tile, MarkSet, MarksError, TileId};
use crate::prompts::{AffordanceResponse, Height, TargetAngle};

/// Grasp proposals drawn per grasp.
pub const GRASP_PROPOSALS: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("missing points: {0}")]
    MissingPoints(String),
    #[error("grasp and function points coincide")]
    DegenerateAxis,
    #[error("{phase:?} phase needs {steps} steps, limit is {max}")]
    PathTooLong { phase: Phase, steps: usize, max: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Marks(#[from] MarksError),
    #[error("invalid motion config: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = MotionError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    /// Height added to "above" waypoints, meters.
    pub h_above: f64,
    /// m/s^2
    pub accel: f64,
    /// m/s
    pub cruise_speed: f64,
    pub control_rate_hz: f64,
    pub max_steps_per_phase: usize,
    /// Lowest height for free-space transit moves.
    pub transit_min_z: f64,
    /// Transit clearance above the waypoint being approached.
    pub transit_clearance: f64,
    /// Converts yaw change to path length (meters per radian) so pure
    /// rotations get a duration.
    pub rotation_radius: f64,
    pub grasp: GraspConfig,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            h_above: 0.15,
            accel: 0.5,
            cruise_speed: 0.15,
            control_rate_hz: 5.0,
            max_steps_per_phase: 100,
            transit_min_z: 0.25,
            transit_clearance: 0.05,
            rotation_radius: 0.1,
            grasp: GraspConfig::default(),
        }
    }
}

impl MotionConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("accel", self.accel),
            ("cruise_speed", self.cruise_speed),
            ("control_rate_hz", self.control_rate_hz),
            ("rotation_radius", self.rotation_radius),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MotionError::InvalidConfig(format!("{k} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn transit_z(&self, z: f64) -> f64 {
        self.transit_min_z.max(z + self.transit_clearance)
    }
}

/// The selected points in the world frame.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AffordanceInstance {
    pub grasp_point: Option<Point3>,
    pub function_point: Option<Point3>,
    pub target_point: Option<Point3>,
    pub pre_contact: Option<Point3>,
    pub post_contact: Option<Point3>,
    pub target_angle: Option<TargetAngle>,
    /// Pixels the waypoints were sampled at.
    pub pre_contact_pixel: Option<Pixel>,
    pub post_contact_pixel: Option<Pixel>,
}

fn keypoint(label: &Option<String>, ms: &MarkSet, depth: &DepthImage, cam: &CameraModel) -> Result<Option<Point3>> {
    let Some(label) = label else { return Ok(None) };
    let px = resolve_selection(ms, label)?;
    let d = depth.depth_at(px)?;
    Ok(Some(cam.deproject_world(px.to_point(), d)?))
}

/// Lifts the selected marks to 3D.
///
/// Keypoints are deprojected at their pixel's depth. Waypoints are sampled
/// uniformly in their tile and placed where the pixel's viewing ray meets
/// the reference height: the target's z, or the function point's, or the
/// grasp point's, plus `h_above` for "above".
pub fn lift_affordance(
    resp: &AffordanceResponse,
    markset: &MarkSet,
    depth: &DepthImage,
    cam: &CameraModel,
    seed: u64,
    cfg: &MotionConfig,
) -> Result<AffordanceInstance> {
    let grasp_point = keypoint(&resp.grasp_keypoint, markset, depth, cam)?;
    let function_point = keypoint(&resp.function_keypoint, markset, depth, cam)?;
    let target_point = keypoint(&resp.target_keypoint, markset, depth, cam)?;
    let reference = target_point.or(function_point).or(grasp_point);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: [u64; 2] = [rng.gen(), rng.gen()];
    let waypoint = |tile: Option<TileId>, height: Option<Height>, s: u64| -> Result<(Option<Point3>, Option<Pixel>)> {
        let Some(tile) = tile else { return Ok((None, None)) };
        let z_ref = reference
            .ok_or_else(|| MotionError::MissingPoints("no keypoint to take the waypoint height from".into()))?
            .z;
        let px = sample_point_in_tile(&markset.grid, tile, s)?;
        let z = match height.unwrap_or(Height::Same) {
            Height::Same => z_ref,
            Height::Above => z_ref + cfg.h_above,
        };
        Ok((Some(cam.lift_to_height(px.to_point(), z)?), Some(px)))
    };
    let (pre_contact, pre_contact_pixel) = waypoint(resp.pre_contact_tile, resp.pre_contact_height, seeds[0])?;
    let (post_contact, post_contact_pixel) = waypoint(resp.post_contact_tile, resp.post_contact_height, seeds[1])?;
    Ok(AffordanceInstance {
        grasp_point,
        function_point,
        target_point,
        pre_contact,
        post_contact,
        target_angle: resp.target_angle,
        pre_contact_pixel,
        post_contact_pixel,
    })
}

/// Minimal rotation taking the grasp-to-function axis onto the axis named
/// by the target angle. Opposite axes get a half turn about the
/// perpendicular closest to vertical.
pub fn resolve_orientation(instance: &AffordanceInstance) -> Result<Rotation3<f64>> {
    let (Some(g), Some(f), Some(angle)) = (instance.grasp_point, instance.function_point, instance.target_angle)
    else {
        let mut missing = Vec::new();
        if instance.grasp_point.is_none() {
            missing.push("grasp_point");
        }
        if instance.function_point.is_none() {
            missing.push("function_point");
        }
        if instance.target_angle.is_none() {
            missing.push("target_angle");
        }
        return Err(MotionError::MissingPoints(missing.join(", ")));
    };
    rotation_onto(f - g, angle.axis())
}

/// Minimal rotation taking direction `v` onto unit axis `a`.
pub fn rotation_onto(v: Vector3, a: Vector3) -> Result<Rotation3<f64>> {
    let n = v.norm();
    if !(n > 1e-12) {
        return Err(MotionError::DegenerateAxis);
    }
    let v = v / n;
    let angle = v.dot(&a).clamp(-1.0, 1.0).acos();
    if angle < 1e-6 {
        return Ok(Rotation3::identity());
    }
    if std::f64::consts::PI - angle < 1e-6 {
        let mut w = Vector3::z() - v * v.z;
        if w.norm() < 1e-6 {
            w = Vector3::x() - v * v.x;
        }
        return Ok(Rotation3::from_axis_angle(&Unit::new_normalize(w), std::f64::consts::PI));
    }
    Ok(Rotation3::rotation_between(&v, &a).expect("non-parallel axes"))
}

/// Rotation about world z by the yaw component of `r`.
pub fn yaw_of(r: &Rotation3<f64>) -> f64 {
    let m = r.matrix();
    m[(1, 0)].atan2(m[(0, 0)])
}

/// Top-down grasp: position at the contact midpoint, yaw of the contact
/// line, opening width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspPose {
    pub position: Point3,
    pub yaw: f64,
    pub width: f64,
}

/// Samples antipodal grasps on the object and picks the one nearest the
/// selected grasp point.
pub fn plan_grasp_phase(
    instance: &AffordanceInstance,
    depth: &DepthImage,
    mask: &BinaryMask,
    cam: &CameraModel,
    seed: u64,
    cfg: &MotionConfig,
) -> Result<GraspPose> {
    let gp = instance
        .grasp_point
        .ok_or_else(|| MotionError::MissingPoints("grasp_point".into()))?;
    let gcfg = GraspConfig { seed, ..cfg.grasp };
    let proposals = sample_antipodal_grasps(depth, mask, cam, GRASP_PROPOSALS, &gcfg)?;
    let best = nearest_grasp(&proposals, &gp)?;
    Ok(GraspPose { position: best.center, yaw: best.yaw, width: best.width })
}

/// Via-points for the function point and the orientation held along them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManipulationPlan {
    /// `[pre_contact, target, post_contact]`
    pub via: [Point3; 3],
    pub rotation: Rotation3<f64>,
}

/// Orders the via-points and resolves the orientation. Without an in-hand
/// object, or without a target angle, the orientation is the identity.
pub fn plan_manipulation_phase(instance: &AffordanceInstance) -> Result<ManipulationPlan> {
    let missing: Vec<&str> = [
        ("pre_contact", instance.pre_contact.is_none()),
        ("target_point", instance.target_point.is_none()),
        ("post_contact", instance.post_contact.is_none()),
    ]
    .into_iter()
    .filter_map(|(k, m)| m.then_some(k))
    .collect();
    if !missing.is_empty() {
        return Err(MotionError::MissingPoints(missing.join(", ")));
    }
    let rotation = match (instance.grasp_point, instance.function_point, instance.target_angle) {
        (Some(_), Some(_), Some(_)) => resolve_orientation(instance)?,
        _ => Rotation3::identity(),
    };
    Ok(ManipulationPlan {
        via: [
            instance.pre_contact.expect("checked"),
            instance.target_point.expect("checked"),
            instance.post_contact.expect("checked"),
        ],
        rotation,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReleaseMode {
    /// Keep holding after the subtask.
    Hold,
    /// Open on reaching the target: placing from above.
    AtTarget,
    /// Open after the post-contact waypoint.
    AfterPost,
}

/// Gripper position and yaw. The position is the fingertip center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperPose {
    pub position: Point3,
    pub yaw: f64,
}

/// Everything needed to generate actions for one subtask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionPlan {
    pub start: GripperPose,
    pub grasp: Option<GraspPose>,
    pub manipulation: Option<ManipulationPlan>,
    /// Function point minus gripper position at grasp time (zero without an
    /// in-hand object: the fingertips make contact).
    pub function_offset: Vector3,
    pub release: ReleaseMode,
    /// True when the orientation had roll or pitch that a top-down gripper
    /// cannot execute; only its yaw is used.
    pub tilt_dropped: bool,
}

impl MotionPlan {
    pub fn compile(
        start: GripperPose,
        instance: &AffordanceInstance,
        grasp: Option<GraspPose>,
        manipulation: Option<ManipulationPlan>,
        pre_contact_height: Option<Height>,
    ) -> Self {
        let function_offset = match (grasp, instance.function_point) {
            (Some(g), Some(f)) => f - g.position,
            _ => Vector3::zeros(),
        };
        let release = match (&grasp, &manipulation) {
            (Some(_), Some(_)) if pre_contact_height == Some(Height::Above) => ReleaseMode::AtTarget,
            (Some(_), Some(_)) => ReleaseMode::AfterPost,
            _ => ReleaseMode::Hold,
        };
        let tilt_dropped = manipulation
            .as_ref()
            .is_some_and(|m| (m.rotation * Vector3::z() - Vector3::z()).norm() > 1e-9);
        if tilt_dropped {
            tracing::warn!("orientation tilts the gripper; executing its yaw only");
        }
        Self { start, grasp, manipulation, function_offset, release, tilt_dropped }
    }

    pub fn phases(&self) -> Vec<Phase> {
        let mut p = Vec::new();
        if self.grasp.is_some() {
            p.push(Phase::Grasp);
        }
        if self.manipulation.is_some() {
            p.push(Phase::Manipulate);
        }
        p
    }

    /// Gripper pose that puts the function point on `via` while the plan's
    /// orientation is held.
    pub fn gripper_for(&self, via: &Point3) -> Point3 {
        let yaw = self.manipulation.as_ref().map(|m| yaw_of(&m.rotation)).unwrap_or(0.0);
        via - Rotation3::from_axis_angle(&Vector3::z_axis(), yaw) * self.function_offset
    }
}
