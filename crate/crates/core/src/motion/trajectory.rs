use serde::{Deserialize, Serialize};

use super::{yaw_of, GripperPose, MotionConfig, MotionError, MotionPlan, ReleaseMode, Result};
use crate::geometry::{Point3, Vector3};

/// `[vx, vy, vz, wx, wy, wz, gripper]`: end-effector twist in the world
/// frame and a gripper command (0 open, 1 closed).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(pub [f64; 7]);

impl Action {
    pub fn new(linear: Vector3, yaw_rate: f64, gripper: f64) -> Self {
        Action([linear.x, linear.y, linear.z, 0.0, 0.0, yaw_rate, gripper])
    }

    pub fn hold(gripper: f64) -> Self {
        Action::new(Vector3::zeros(), 0.0, gripper)
    }

    pub fn linear(&self) -> Vector3 {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn angular(&self) -> Vector3 {
        Vector3::new(self.0[3], self.0[4], self.0[5])
    }

    pub fn gripper(&self) -> f64 {
        self.0[6]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Grasp,
    Manipulate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseTrajectory {
    pub phase: Phase,
    pub actions: Vec<Action>,
    /// Number of actions after which each keyframe of the phase is reached.
    pub keyframe_steps: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub phases: Vec<PhaseTrajectory>,
}

impl Trajectory {
    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.phases.iter().flat_map(|p| p.actions.iter())
    }

    pub fn len(&self) -> usize {
        self.phases.iter().map(|p| p.actions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Duration of a rest-to-rest trapezoidal profile over `length`.
pub fn trapezoid_duration(length: f64, vmax: f64, accel: f64) -> f64 {
    if length <= 0.0 {
        return 0.0;
    }
    if length >= vmax * vmax / accel {
        length / vmax + vmax / accel
    } else {
        2.0 * (length / accel).sqrt()
    }
}

fn trapezoid_distance(t: f64, length: f64, vmax: f64, accel: f64) -> f64 {
    let total = trapezoid_duration(length, vmax, accel);
    let ta = (vmax / accel).min(total / 2.0);
    let vpeak = accel * ta;
    if t <= ta {
        0.5 * accel * t * t
    } else if t <= total - ta {
        0.5 * accel * ta * ta + vpeak * (t - ta)
    } else {
        let r = (total - t).max(0.0);
        length - 0.5 * accel * r * r
    }
}

fn segment(a: &GripperPose, b: &GripperPose, gripper: f64, cfg: &MotionConfig) -> Vec<Action> {
    let dp = b.position - a.position;
    let dyaw = b.yaw - a.yaw;
    let len = dp.norm().max(cfg.rotation_radius * dyaw.abs());
    if len == 0.0 {
        return Vec::new();
    }
    let dt = cfg.dt();
    let total = trapezoid_duration(len, cfg.cruise_speed, cfg.accel);
    let n = ((total / dt) - 1e-9).ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(n);
    let (mut prev_p, mut prev_yaw) = (a.position, a.yaw);
    for k in 1..=n {
        let (p, yaw) = if k == n {
            (b.position, b.yaw)
        } else {
            let f = trapezoid_distance(k as f64 * dt, len, cfg.cruise_speed, cfg.accel) / len;
            (a.position + dp * f, a.yaw + dyaw * f)
        };
        out.push(Action::new((p - prev_p) / dt, (yaw - prev_yaw) / dt, gripper));
        prev_p = p;
        prev_yaw = yaw;
    }
    out
}

/// Rest-to-rest moves through `waypoints` in order, holding the gripper
/// command. Stops at every waypoint; the last sample of each move lands on
/// it exactly.
pub fn interpolate_waypoints(
    start: &GripperPose,
    waypoints: &[GripperPose],
    gripper: f64,
    cfg: &MotionConfig,
) -> Result<Vec<Action>> {
    cfg.validate()?;
    let mut cur = *start;
    let mut out = Vec::new();
    for w in waypoints {
        out.extend(segment(&cur, w, gripper, cfg));
        cur = *w;
    }
    if out.len() > cfg.max_steps_per_phase {
        return Err(MotionError::PathTooLong {
            phase: Phase::Manipulate,
            steps: out.len(),
            max: cfg.max_steps_per_phase,
        });
    }
    Ok(out)
}

struct Frame {
    pose: GripperPose,
    /// Gripper command issued after reaching the pose.
    set_gripper: Option<f64>,
}

fn run_phase(
    phase: Phase,
    cur: &mut GripperPose,
    gripper: &mut f64,
    frames: &[Frame],
    cfg: &MotionConfig,
) -> Result<PhaseTrajectory> {
    let mut actions = Vec::new();
    let mut keyframe_steps = Vec::with_capacity(frames.len());
    for f in frames {
        actions.extend(segment(cur, &f.pose, *gripper, cfg));
        *cur = f.pose;
        keyframe_steps.push(actions.len());
        if let Some(g) = f.set_gripper {
            *gripper = g;
            actions.push(Action::hold(g));
        }
    }
    if actions.len() > cfg.max_steps_per_phase {
        return Err(MotionError::PathTooLong { phase, steps: actions.len(), max: cfg.max_steps_per_phase });
    }
    Ok(PhaseTrajectory { phase, actions, keyframe_steps })
}

/// Action stream for a plan.
///
/// Grasp phase: over the grasp, down, close, back up. Manipulation phase:
/// over the pre-contact waypoint, then pre-contact, target, post-contact
/// for the function point with the orientation held, then up. Transit
/// moves run at `max(transit_min_z, z + transit_clearance)`.
pub fn interpolate(plan: &MotionPlan, cfg: &MotionConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let mut cur = plan.start;
    let mut gripper = 0.0;
    let mut phases = Vec::new();
    let up = |p: Point3| Point3::new(p.x, p.y, cfg.transit_z(p.z));
    if let Some(g) = &plan.grasp {
        let at = GripperPose { position: g.position, yaw: g.yaw };
        let above = GripperPose { position: up(g.position), yaw: g.yaw };
        let frames = [
            Frame { pose: above, set_gripper: None },
            Frame { pose: at, set_gripper: Some(1.0) },
            Frame { pose: above, set_gripper: None },
        ];
        phases.push(run_phase(Phase::Grasp, &mut cur, &mut gripper, &frames, cfg)?);
    }
    if let Some(m) = &plan.manipulation {
        let yaw = cur.yaw + yaw_of(&m.rotation);
        let pose = |p: Point3| GripperPose { position: p, yaw };
        let [pre, target, post] = m.via.map(|v| plan.gripper_for(&v));
        let open = |mode: ReleaseMode| (plan.release == mode).then_some(0.0);
        let frames = [
            Frame { pose: pose(up(pre)), set_gripper: None },
            Frame { pose: pose(pre), set_gripper: None },
            Frame { pose: pose(target), set_gripper: open(ReleaseMode::AtTarget) },
            Frame { pose: pose(post), set_gripper: open(ReleaseMode::AfterPost) },
            Frame { pose: pose(up(post)), set_gripper: None },
        ];
        phases.push(run_phase(Phase::Manipulate, &mut cur, &mut gripper, &frames, cfg)?);
    }
    Ok(Trajectory { dt: cfg.dt(), phases })
}

/// Poses reached after each action, starting from `start`.
pub fn integrate<'a>(start: &GripperPose, actions: impl IntoIterator<Item = &'a Action>, dt: f64) -> Vec<GripperPose> {
    let mut cur = *start;
    actions
        .into_iter()
        .map(|a| {
            cur.position += a.linear() * dt;
            cur.yaw += a.angular().z * dt;
            cur
        })
        .collect()
}

/// One JSON object per line: `{"t": seconds, "action": [7 numbers]}`.
pub fn actions_to_jsonl<'a>(actions: impl IntoIterator<Item = &'a Action>, dt: f64) -> String {
    let mut out = String::new();
    for (k, a) in actions.into_iter().enumerate() {
        let line = serde_json::json!({"t": k as f64 * dt, "action": a});
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}
