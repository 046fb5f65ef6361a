use super::poly::{contains, line_interval, minkowski_difference, shrink, Polygon, Pose2, Vec2};
use super::scene::{footprint_centroid, top_z, world_parts, ArticulationKind, MassClass, ObjectSpec, SceneSpec};
use super::{Attachment, Result, SimError, SimState, Simulator};
use crate::motion::Action;

pub(super) fn step(sim: &Simulator, s: &SimState, action: &Action) -> Result<SimState> {
    if let Some(v) = action.0.iter().find(|v| !v.is_finite()) {
        return Err(SimError::InvalidAction(format!("non-finite component {v}")));
    }
    if s.step_counter >= sim.max_steps_per_stage {
        return Err(SimError::StageStepLimitExceeded { limit: sim.max_steps_per_stage });
    }
    let spec = sim.spec();
    let mut n = s.clone();
    let p0 = s.gripper.position;
    let p1 = p0 + action.linear() * sim.dt;
    n.gripper.position = p1;
    n.gripper.yaw = s.gripper.yaw + action.angular().z * sim.dt;

    push(spec, s, &mut n);
    if let Some(att) = &s.attached {
        follow(spec, &mut n, att);
        pull_cable(spec, &mut n, att);
    } else {
        press_buttons(spec, &mut n);
        swing_lids(spec, s, &mut n);
    }

    let close = action.gripper() >= 0.5;
    if close && !s.gripper.closed {
        n.gripper.closed = true;
        match try_attach(spec, &n) {
            Some((att, width)) => {
                n.contacts.insert(att.object.clone());
                n.attached = Some(att);
                n.gripper.aperture = width;
            }
            None => n.gripper.aperture = 0.0,
        }
    } else if !close && s.gripper.closed {
        n.gripper.closed = false;
        n.gripper.aperture = spec.gripper.aperture;
        if let Some(att) = n.attached.take() {
            drop_object(spec, &mut n, &att.object);
        }
    }
    n.step_counter += 1;
    n.total_steps += 1;
    Ok(n)
}

fn index(spec: &SceneSpec, name: &str) -> usize {
    spec.index_of(name).expect("state objects match the scene")
}

/// Places the held object at its fixed offset from the gripper.
pub(super) fn follow(spec: &SceneSpec, n: &mut SimState, att: &Attachment) {
    let i = index(spec, &att.object);
    let g = Pose2::new(n.gripper.position.x, n.gripper.position.y, n.gripper.yaw);
    let p = g.apply([att.offset[0], att.offset[1]]);
    n.objects[i].pose = Pose2::new(p[0], p[1], n.gripper.yaw + att.yaw_offset);
    n.objects[i].base_z = n.gripper.position.z + att.offset[2];
}

fn pull_cable(spec: &SceneSpec, n: &mut SimState, att: &Attachment) {
    let i = index(spec, &att.object);
    let Some(a) = spec.objects[i].articulation.filter(|a| a.kind == ArticulationKind::Cable) else { return };
    let axis = att.grasped_at.rotate(a.axis);
    let len = axis[0].hypot(axis[1]);
    let p = n.objects[i].pose;
    let along = ((p.x - att.grasped_at.x) * axis[0] + (p.y - att.grasped_at.y) * axis[1]) / len;
    let v = n.objects[i].articulation.unwrap_or(0.0);
    n.objects[i].articulation = Some(v.max((along / a.travel).clamp(0.0, 1.0)));
}

fn pushable(spec: &ObjectSpec, value: Option<f64>) -> bool {
    match spec.articulation.map(|a| a.kind) {
        Some(ArticulationKind::Drawer) => true,
        Some(ArticulationKind::Cable) => spec.mass == MassClass::Light && value.unwrap_or(0.0) >= 1.0,
        Some(_) => false,
        None => spec.mass == MassClass::Light,
    }
}

/// How far `pusher` sweeping `len` along unit `dir` drives into `target`:
/// `None` without contact, else the distance travelled past first contact.
fn sweep_overlap(pusher: &[Polygon], target: &[Polygon], dir: Vec2, len: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for a in pusher {
        for b in target {
            let m = minkowski_difference(b, a);
            if m.len() < 3 {
                continue;
            }
            if let Some((t0, t1)) = line_interval(&m, [0.0, 0.0], dir) {
                if t1 >= 0.0 && t0 <= len {
                    let d = len - t0.max(0.0);
                    best = Some(best.map_or(d, |x: f64| x.max(d)));
                }
            }
        }
    }
    best
}

/// Quasi-static push: anything the fingertips or the held object sweep
/// through is carried along the motion direction by the swept overlap.
fn push(spec: &SceneSpec, s: &SimState, n: &mut SimState) {
    let (p0, p1) = (s.gripper.position, n.gripper.position);
    let m = [p1.x - p0.x, p1.y - p0.y];
    let len = m[0].hypot(m[1]);
    let (pusher, zlo, zhi, held) = match &s.attached {
        Some(att) => {
            let i = index(spec, &att.object);
            let o = &s.objects[i];
            let dz = p1.z - p0.z;
            let (lo, hi) = (o.base_z, top_z(&spec.objects[i], o));
            (world_parts(&spec.objects[i], o), lo.min(lo + dz), hi.max(hi + dz), Some(i))
        }
        None => {
            let tip = vec![vec![[p0.x, p0.y]]];
            (tip, p0.z.min(p1.z), p0.z.max(p1.z) + spec.gripper.body_height, None)
        }
    };
    for (i, o) in spec.objects.iter().enumerate() {
        if Some(i) == held {
            continue;
        }
        let st = &s.objects[i];
        let (lo, hi) = (st.base_z, top_z(o, st));
        if !(zlo < hi - 1e-9 && zhi > lo + 1e-9) {
            continue;
        }
        let target = world_parts(o, st);
        let hit = if len > 1e-12 {
            sweep_overlap(&pusher, &target, [m[0] / len, m[1] / len], len)
        } else {
            let inside = pusher.iter().flatten().any(|q| target.iter().any(|t| contains(t, *q)));
            inside.then_some(0.0)
        };
        let Some(d) = hit else { continue };
        n.contacts.insert(o.name.clone());
        if d <= 1e-12 || !pushable(o, st.articulation) {
            continue;
        }
        let dir = [m[0] / len, m[1] / len];
        match o.articulation {
            Some(a) if a.kind == ArticulationKind::Drawer => {
                let axis = st.pose.rotate(a.axis);
                let l = axis[0].hypot(axis[1]);
                let closing = -(dir[0] * axis[0] + dir[1] * axis[1]) / l * d;
                if closing > 0.0 {
                    let v = n.objects[i].articulation.unwrap_or(0.0);
                    n.objects[i].articulation = Some((v - closing / a.travel).max(0.0));
                }
            }
            _ => {
                n.objects[i].pose.x += dir[0] * d;
                n.objects[i].pose.y += dir[1] * d;
            }
        }
    }
}

fn press_buttons(spec: &SceneSpec, n: &mut SimState) {
    let p = n.gripper.position;
    for (i, o) in spec.objects.iter().enumerate() {
        if o.articulation.map(|a| a.kind) != Some(ArticulationKind::Button) {
            continue;
        }
        let st = &n.objects[i];
        let top = top_z(o, st);
        let over = world_parts(o, st).iter().any(|part| contains(part, [p.x, p.y]));
        if over && p.z <= top + spec.gripper.press_tolerance && p.z >= st.base_z - spec.gripper.z_tolerance {
            n.objects[i].articulation = Some(1.0);
            n.contacts.insert(o.name.clone());
        }
    }
}

/// A lid standing open is pushed over by fingertips crossing its top edge
/// in the closing direction (local +x). The edge follows the fingertips;
/// once pushed `travel` past the hinge the lid falls shut.
fn swing_lids(spec: &SceneSpec, s: &SimState, n: &mut SimState) {
    let (p0, p1) = (s.gripper.position, n.gripper.position);
    for (i, o) in spec.objects.iter().enumerate() {
        let Some(a) = o.articulation.filter(|a| a.kind == ArticulationKind::Lid) else { continue };
        let st = &n.objects[i];
        let v = st.articulation.unwrap_or(0.0);
        if v <= 0.0 {
            continue;
        }
        let len = o.parts.iter().flatten().map(|q| q[0]).fold(0.0, f64::max);
        let (ylo, yhi) = o.parts.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), q| {
            (a.min(q[1]), b.max(q[1]))
        });
        let edge = len * (v * std::f64::consts::FRAC_PI_2).cos().max(o.height / len);
        let q0 = st.pose.inverse_apply([p0.x, p0.y]);
        let q1 = st.pose.inverse_apply([p1.x, p1.y]);
        let in_reach = q1[1] >= ylo && q1[1] <= yhi && p1.z >= st.base_z && p1.z <= top_z(o, st) + spec.gripper.z_tolerance;
        if !(in_reach && q0[0] <= edge + 1e-9 && q1[0] > edge) {
            continue;
        }
        n.contacts.insert(o.name.clone());
        let value = if q1[0] >= a.travel {
            0.0
        } else {
            (q1[0] / len).clamp(0.0, 1.0).acos() / std::f64::consts::FRAC_PI_2
        };
        n.objects[i].articulation = Some(value.min(v));
    }
}

/// The chord of the footprint along the closing line through the
/// fingertips; attaches when it fits the aperture and is centered within
/// tolerance. Among several candidates the highest wins.
fn try_attach(spec: &SceneSpec, n: &SimState) -> Option<(Attachment, f64)> {
    let g = &n.gripper;
    let gs = &spec.gripper;
    let dir = [g.yaw.cos(), g.yaw.sin()];
    let mut best: Option<(f64, f64, usize, f64)> = None;
    for (i, o) in spec.objects.iter().enumerate() {
        let st = &n.objects[i];
        if o.mass == MassClass::Heavy {
            continue;
        }
        let top = top_z(o, st);
        if g.position.z < st.base_z - gs.z_tolerance || g.position.z > top + gs.z_tolerance {
            continue;
        }
        let mut spans: Vec<(f64, f64)> = world_parts(o, st)
            .iter()
            .filter_map(|p| line_interval(p, [g.position.x, g.position.y], dir))
            .collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (a, b) in spans {
            match merged.last_mut() {
                Some(last) if a <= last.1 + 1e-9 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        let Some(&(a, b)) = merged.iter().min_by(|x, y| {
            ((x.0 + x.1) / 2.0).abs().total_cmp(&((y.0 + y.1) / 2.0).abs())
        }) else {
            continue;
        };
        let (mid, width) = ((a + b) / 2.0, b - a);
        if mid.abs() > gs.attach_tolerance + 1e-12 || width > gs.aperture + 1e-12 {
            continue;
        }
        if best.is_none_or(|(t, m, _, _)| top > t || (top == t && mid.abs() < m)) {
            best = Some((top, mid.abs(), i, width));
        }
    }
    let (_, _, i, width) = best?;
    let st = &n.objects[i];
    let gp = Pose2::new(g.position.x, g.position.y, g.yaw);
    let off = gp.inverse_apply([st.pose.x, st.pose.y]);
    Some((
        Attachment {
            object: spec.objects[i].name.clone(),
            offset: [off[0], off[1], st.base_z - g.position.z],
            yaw_offset: st.pose.yaw - g.yaw,
            grasped_at: st.pose,
        },
        width,
    ))
}

/// Surface height of `o` at `p`: the floor inside a receptacle's walls,
/// else its top.
fn surface_at(o: &ObjectSpec, st: &super::ObjectState, p: Vec2) -> Option<f64> {
    let parts = world_parts(o, st);
    if !parts.iter().any(|part| contains(part, p)) {
        return None;
    }
    if let Some(r) = o.receptacle {
        if shrink(&parts[0], r.wall).is_some_and(|inner| contains(&inner, p)) {
            return Some(st.base_z + r.floor);
        }
    }
    Some(top_z(o, st))
}

/// Lets go of an object: it comes to rest on whatever surface lies under
/// its centroid and below its top, or on the table.
fn drop_object(spec: &SceneSpec, n: &mut SimState, name: &str) {
    let i = index(spec, name);
    let c = footprint_centroid(&spec.objects[i], &n.objects[i]);
    let top = top_z(&spec.objects[i], &n.objects[i]);
    let support = spec
        .objects
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .filter_map(|(j, o)| surface_at(o, &n.objects[j], c))
        .filter(|z| *z <= top)
        .fold(0.0, f64::max);
    n.objects[i].base_z = support;
}
