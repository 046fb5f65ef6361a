use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::poly::{aabb, ccw, centroid, convex_hull, signed_area, Polygon, Pose2, Vec2};
use super::{Result, SimError, SuccessPredicate};
use crate::geometry::{CameraModel, Point3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassClass {
    #[default]
    Light,
    Heavy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArticulationKind {
    /// 0 released, 1 pressed.
    Button,
    /// Hinged along the local y axis at local x = 0; closed footprint is the
    /// object's parts. 0 closed, 1 standing open.
    Lid,
    /// Slides along `axis`; 0 closed, 1 fully out by `travel`.
    Drawer,
    /// Plugged until pulled `travel` along `axis`; 0 plugged, 1 unplugged.
    Cable,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArticulationSpec {
    pub kind: ArticulationKind,
    /// Local-frame direction: opening for drawers, pulling for cables.
    #[serde(default = "default_axis")]
    pub axis: Vec2,
    /// Meters: drawer stroke, cable pull-out distance, or the push past
    /// upright that makes a lid fall shut.
    #[serde(default = "default_travel")]
    pub travel: f64,
    /// Initial value.
    #[serde(default)]
    pub value: f64,
}

fn default_axis() -> Vec2 {
    [1.0, 0.0]
}

fn default_travel() -> f64 {
    0.03
}

/// Open-top container: walls of `wall` thickness around a floor `floor`
/// above the base. Only single-part objects can be receptacles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReceptacleSpec {
    #[serde(default = "default_wall")]
    pub wall: f64,
    #[serde(default = "default_wall")]
    pub floor: f64,
}

fn default_wall() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    /// Convex parts in the object frame, meters. Their union is the footprint.
    pub parts: Vec<Polygon>,
    pub height: f64,
    pub pose: Pose2,
    #[serde(default)]
    pub base_z: f64,
    pub color: [u8; 3],
    #[serde(default)]
    pub mass: MassClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub articulation: Option<ArticulationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receptacle: Option<ReceptacleSpec>,
    /// Named points on the top face, object frame.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub anchors: BTreeMap<String, Vec2>,
    /// Objects sharing a group are jittered as one rigid body. Defaults to
    /// the object's own name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopDownSpec {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub focal: f64,
}

/// Image size plus either a top-down placement or a full model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_down: Option<TopDownSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<CameraModel>,
}

impl CameraSpec {
    pub fn model(&self) -> Result<CameraModel> {
        match (self.top_down, self.model) {
            (_, Some(m)) => Ok(m),
            (Some(t), None) => Ok(CameraModel::top_down(t.x, t.y, t.z, t.focal, self.width, self.height)),
            (None, None) => Err(SimError::InvalidScene("camera needs top_down or model".into())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TableSpec {
    /// `[x_min, x_max, y_min, y_max]`
    pub bounds: [f64; 4],
    pub color: [u8; 3],
}

impl Default for TableSpec {
    fn default() -> Self {
        Self { bounds: [0.0, 1.0, -0.5, 0.5], color: [205, 195, 175] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GripperSpec {
    pub neutral: [f64; 3],
    pub neutral_yaw: f64,
    /// Maximum opening, meters.
    pub aperture: f64,
    /// Largest offset between the fingertip center and the grasped chord's
    /// midpoint that still attaches.
    pub attach_tolerance: f64,
    /// Slack on the fingertip height relative to the object's extent.
    pub z_tolerance: f64,
    /// A button counts as pressed when the fingertips come this close to
    /// its top.
    pub press_tolerance: f64,
    /// Side of the square drawn for the gripper body.
    pub body_size: f64,
    /// Height of the body's top above the fingertips.
    pub body_height: f64,
    pub color: [u8; 3],
}

impl Default for GripperSpec {
    fn default() -> Self {
        Self {
            neutral: [-0.2, 0.0, 0.5],
            neutral_yaw: 0.0,
            aperture: 0.085,
            attach_tolerance: 0.01,
            z_tolerance: 0.01,
            press_tolerance: 0.002,
            body_size: 0.03,
            body_height: 0.05,
            color: [70, 70, 75],
        }
    }
}

/// Per-group pose noise for scene variations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JitterSpec {
    /// Maximum translation per axis, meters.
    pub xy: f64,
    /// Maximum rotation, radians.
    pub yaw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    #[serde(default)]
    pub instruction: String,
    pub predicates: Vec<SuccessPredicate>,
}

/// Declarative tabletop scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub name: String,
    #[serde(default)]
    pub task_family: String,
    #[serde(default)]
    pub instruction: String,
    pub camera: CameraSpec,
    #[serde(default)]
    pub table: TableSpec,
    #[serde(default)]
    pub gripper: GripperSpec,
    pub objects: Vec<ObjectSpec>,
    /// Success predicates per subtask, in order.
    #[serde(default)]
    pub stages: Vec<StageSpec>,
    #[serde(default)]
    pub jitter: JitterSpec,
    #[serde(default)]
    pub seed: u64,
}

impl SceneSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: SceneSpec = serde_json::from_str(s).map_err(|e| SimError::InvalidScene(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&s).map_err(|e| match e {
            SimError::InvalidScene(m) => SimError::InvalidScene(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn object(&self, name: &str) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.name == name)
    }

    /// Unique names, convex counter-clockwise parts, footprints inside the
    /// table, a usable camera.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::InvalidScene(m));
        self.camera.model()?;
        if self.camera.width == 0 || self.camera.height == 0 {
            return bad("camera image is empty".into());
        }
        let mut names = BTreeSet::new();
        for o in &self.objects {
            if !names.insert(o.name.as_str()) {
                return bad(format!("duplicate object name {:?}", o.name));
            }
            if o.name.trim().is_empty() {
                return bad("object with an empty name".into());
            }
            if !(o.height > 0.0) || o.parts.is_empty() {
                return bad(format!("{}: needs a positive height and at least one part", o.name));
            }
            for p in &o.parts {
                if p.len() < 3 || signed_area(p) <= 0.0 || convex_hull(p.clone()).len() != p.len() {
                    return bad(format!("{}: parts must be convex and counter-clockwise", o.name));
                }
            }
            if o.receptacle.is_some() && o.parts.len() != 1 {
                return bad(format!("{}: a receptacle must have exactly one part", o.name));
            }
            if let Some(a) = &o.articulation {
                if !(0.0..=1.0).contains(&a.value) || !(a.travel > 0.0) || !(a.axis[0].hypot(a.axis[1]) > 0.0) {
                    return bad(format!("{}: articulation needs value in [0, 1], positive travel, nonzero axis", o.name));
                }
            }
            let [x0, x1, y0, y1] = self.table.bounds;
            let state = ObjectState::spawn(o);
            for p in world_parts(o, &state) {
                let b = aabb(&p);
                if b[0] < x0 - 1e-9 || b[1] > x1 + 1e-9 || b[2] < y0 - 1e-9 || b[3] > y1 + 1e-9 {
                    return bad(format!("{}: footprint leaves the table", o.name));
                }
            }
        }
        for s in &self.stages {
            for p in &s.predicates {
                for n in p.objects() {
                    if !names.contains(n) {
                        return bad(format!("predicate names unknown object {n:?}"));
                    }
                }
            }
        }
        Ok(())
    }

    /// The same scene seen at another image width; the camera's intrinsics
    /// scale with it and the aspect ratio is kept.
    pub fn resized(&self, width: u32) -> Result<SceneSpec> {
        let k = width as f64 / self.camera.width as f64;
        let height = (self.camera.height as f64 * k).round() as u32;
        if width == 0 || height == 0 {
            return Err(SimError::InvalidScene(format!("cannot render at width {width}")));
        }
        let mut out = self.clone();
        out.camera = CameraSpec {
            width,
            height,
            top_down: self.camera.top_down.map(|t| TopDownSpec { focal: t.focal * k, ..t }),
            model: self.camera.model.map(|m| m.scaled(k)),
        };
        Ok(out)
    }

    /// A variation of the scene: every jitter group is moved by a random
    /// planar rigid motion about its first object's position.
    pub fn jittered(&self, seed: u64) -> Result<SceneSpec> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        out.seed = seed;
        let mut groups: BTreeMap<String, (Vec2, f64, f64, f64)> = BTreeMap::new();
        for o in &self.objects {
            let g = o.group.clone().unwrap_or_else(|| o.name.clone());
            if !groups.contains_key(&g) {
                let (dx, dy, dyaw) = (
                    sym(&mut rng, self.jitter.xy),
                    sym(&mut rng, self.jitter.xy),
                    sym(&mut rng, self.jitter.yaw),
                );
                groups.insert(g, ([o.pose.x, o.pose.y], dx, dy, dyaw));
            }
        }
        for o in &mut out.objects {
            let g = o.group.clone().unwrap_or_else(|| o.name.clone());
            let (c, dx, dy, dyaw) = groups[&g];
            let m = Pose2::new(c[0] + dx, c[1] + dy, dyaw);
            let p = m.apply([o.pose.x - c[0], o.pose.y - c[1]]);
            o.pose = Pose2::new(p[0], p[1], o.pose.yaw + dyaw);
        }
        out.validate()?;
        Ok(out)
    }
}

fn sym(rng: &mut ChaCha8Rng, a: f64) -> f64 {
    if a > 0.0 {
        rng.gen_range(-a..=a)
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub name: String,
    pub pose: Pose2,
    pub base_z: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub articulation: Option<f64>,
}

impl ObjectState {
    pub fn spawn(spec: &ObjectSpec) -> Self {
        Self {
            name: spec.name.clone(),
            pose: spec.pose,
            base_z: spec.base_z,
            articulation: spec.articulation.map(|a| a.value),
        }
    }
}

fn lid_length(spec: &ObjectSpec) -> f64 {
    spec.parts.iter().flatten().map(|p| p[0]).fold(0.0, f64::max)
}

/// Stretch along local x (lids) and shift (drawers) applied to the
/// object-frame geometry in its current articulation state.
fn local_map(spec: &ObjectSpec, state: &ObjectState) -> (f64, Vec2) {
    match (spec.articulation, state.articulation) {
        (Some(a), Some(v)) if a.kind == ArticulationKind::Lid => {
            let theta = v * std::f64::consts::FRAC_PI_2;
            (theta.cos().max(spec.height / lid_length(spec).max(1e-9)).min(1.0), [0.0, 0.0])
        }
        (Some(a), Some(v)) if a.kind == ArticulationKind::Drawer => {
            let n = a.axis[0].hypot(a.axis[1]);
            (1.0, [a.axis[0] / n * v * a.travel, a.axis[1] / n * v * a.travel])
        }
        _ => (1.0, [0.0, 0.0]),
    }
}

/// Current footprint parts in the object frame.
pub fn local_parts(spec: &ObjectSpec, state: &ObjectState) -> Vec<Polygon> {
    let (k, off) = local_map(spec, state);
    spec.parts
        .iter()
        .map(|p| ccw(p.iter().map(|q| [q[0] * k + off[0], q[1] + off[1]]).collect()))
        .collect()
}

pub fn world_parts(spec: &ObjectSpec, state: &ObjectState) -> Vec<Polygon> {
    local_parts(spec, state)
        .into_iter()
        .map(|p| p.into_iter().map(|q| state.pose.apply(q)).collect())
        .collect()
}

/// Height of the highest point of the object.
pub fn top_z(spec: &ObjectSpec, state: &ObjectState) -> f64 {
    let lift = match (spec.articulation, state.articulation) {
        (Some(a), Some(v)) if a.kind == ArticulationKind::Lid => {
            lid_length(spec) * (v * std::f64::consts::FRAC_PI_2).sin()
        }
        _ => 0.0,
    };
    state.base_z + spec.height + lift
}

/// Area-weighted centroid of the footprint, world frame.
pub fn footprint_centroid(spec: &ObjectSpec, state: &ObjectState) -> Vec2 {
    let parts = world_parts(spec, state);
    let (mut sx, mut sy, mut sa) = (0.0, 0.0, 0.0);
    for p in &parts {
        let a = signed_area(p);
        let c = centroid(p);
        sx += c[0] * a;
        sy += c[1] * a;
        sa += a;
    }
    [sx / sa, sy / sa]
}

/// Named anchors in the world frame, on the top face. The key `""` is the
/// footprint centroid. Lid anchors follow the lid as it swings.
pub fn world_anchors(spec: &ObjectSpec, state: &ObjectState) -> BTreeMap<String, Point3> {
    let z = top_z(spec, state);
    let c = footprint_centroid(spec, state);
    let mut out = BTreeMap::new();
    out.insert(String::new(), Point3::new(c[0], c[1], z));
    let (k, off) = local_map(spec, state);
    for (name, p) in &spec.anchors {
        let w = state.pose.apply([p[0] * k + off[0], p[1] + off[1]]);
        out.insert(name.clone(), Point3::new(w[0], w[1], z));
    }
    out
}
