//! Deterministic 2.5D tabletop simulator: extruded convex-polygon objects
//! seen by one camera, a floating parallel-jaw gripper, quasi-static
//! pushing and four small mechanisms.

pub mod poly;
mod predicate;
mod render;
mod scene;
mod step;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraModel, Point3};
use crate::motion::GripperPose;

pub use poly::{Polygon, Pose2, Vec2};
pub use predicate::{PredicateOutcome, Region, SuccessPredicate, SuccessReport};
pub use render::Observation;
pub use scene::{
    footprint_centroid, top_z, world_anchors, world_parts, ArticulationKind, ArticulationSpec, CameraSpec,
    GripperSpec, JitterSpec, MassClass, ObjectSpec, ObjectState, ReceptacleSpec, SceneSpec, StageSpec, TableSpec,
    TopDownSpec,
};

/// Seconds per action.
pub const CONTROL_DT: f64 = 0.2;
/// Actions allowed per stage before the episode is cut.
pub const MAX_STEPS_PER_STAGE: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("stage exceeded {limit} steps")]
    StageStepLimitExceeded { limit: usize },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("unknown object {0:?}")]
    UnknownObject(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    /// Fingertip center.
    pub position: Point3,
    pub yaw: f64,
    /// Current opening, meters.
    pub aperture: f64,
    pub closed: bool,
}

impl GripperState {
    pub fn pose(&self) -> GripperPose {
        GripperPose { position: self.position, yaw: self.yaw }
    }
}

/// A held object, fixed in the gripper frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub object: String,
    /// Object origin in the gripper frame: planar offset and height offset.
    pub offset: [f64; 3],
    pub yaw_offset: f64,
    /// Object pose when it was grasped.
    pub grasped_at: Pose2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// Same order as the scene's objects.
    pub objects: Vec<ObjectState>,
    /// Poses at spawn, for displacement checks.
    pub initial_poses: Vec<Pose2>,
    pub gripper: GripperState,
    pub attached: Option<Attachment>,
    pub step_counter: usize,
    pub total_steps: usize,
    /// Objects touched by the fingertips or the held object so far.
    pub contacts: BTreeSet<String>,
}

impl SimState {
    pub fn object(&self, name: &str) -> Option<&ObjectState> {
        self.objects.iter().find(|o| o.name == name)
    }
}

/// A scene plus its camera, ready to step and render.
#[derive(Clone, Debug)]
pub struct Simulator {
    spec: SceneSpec,
    camera: CameraModel,
    pub dt: f64,
    pub max_steps_per_stage: usize,
}

impl Simulator {
    pub fn new(spec: SceneSpec) -> Result<Self> {
        spec.validate()?;
        let camera = spec.camera.model()?;
        Ok(Self { spec, camera, dt: CONTROL_DT, max_steps_per_stage: MAX_STEPS_PER_STAGE })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn initial_state(&self) -> SimState {
        let objects: Vec<ObjectState> = self.spec.objects.iter().map(ObjectState::spawn).collect();
        let g = &self.spec.gripper;
        SimState {
            initial_poses: objects.iter().map(|o| o.pose).collect(),
            objects,
            gripper: GripperState {
                position: Point3::from(g.neutral),
                yaw: g.neutral_yaw,
                aperture: g.aperture,
                closed: false,
            },
            attached: None,
            step_counter: 0,
            total_steps: 0,
            contacts: BTreeSet::new(),
        }
    }

    /// Gripper back to the neutral pose, carrying whatever it holds; the
    /// stage counter restarts.
    pub fn reset_to_neutral(&self, state: &SimState) -> SimState {
        let mut n = state.clone();
        let g = &self.spec.gripper;
        n.gripper.position = Point3::from(g.neutral);
        n.gripper.yaw = g.neutral_yaw;
        if let Some(att) = &state.attached {
            step::follow(&self.spec, &mut n, att);
        }
        n.step_counter = 0;
        n
    }

    /// Restarts the stage counter.
    pub fn begin_stage(&self, state: &SimState) -> SimState {
        SimState { step_counter: 0, ..state.clone() }
    }

    pub fn render(&self, state: &SimState) -> Observation {
        render::render(&self.spec, &self.camera, state)
    }

    pub fn step(&self, state: &SimState, action: &crate::motion::Action) -> Result<SimState> {
        step::step(self, state, action)
    }

    pub fn check_success(&self, state: &SimState, predicates: &[SuccessPredicate]) -> SuccessReport {
        predicate::check_all(&self.spec, state, predicates)
    }

    /// World anchor points keyed `"object"` (footprint centroid on the top
    /// face) and `"object.anchor"`.
    pub fn anchors(&self, state: &SimState) -> BTreeMap<String, Point3> {
        let mut out = BTreeMap::new();
        for (spec, st) in self.spec.objects.iter().zip(&state.objects) {
            for (k, p) in world_anchors(spec, st) {
                let key = if k.is_empty() { spec.name.clone() } else { format!("{}.{k}", spec.name) };
                out.insert(key, p);
            }
        }
        out
    }
}
