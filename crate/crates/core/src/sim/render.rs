use std::collections::BTreeMap;

use image::{Rgb, RgbImage};

use super::poly::{aabb, contains, shrink, Polygon, Pose2};
use super::scene::{top_z, world_parts, SceneSpec};
use super::{GripperState, SimState};
use crate::geometry::{BinaryMask, CameraModel, DepthImage, ImagePoint};

/// What the camera and the arm report.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub rgb: RgbImage,
    /// Camera z-depth of the first surface along each pixel's ray.
    pub depth: DepthImage,
    /// One mask per scene object, in scene order by name. Pixels showing
    /// the table or the gripper belong to none.
    pub masks: BTreeMap<String, BinaryMask>,
    pub proprioception: GripperState,
}

/// A horizontal face: a convex polygon at height `z`, minus an optional
/// convex hole.
struct Face {
    poly: Polygon,
    hole: Option<Polygon>,
    bounds: [f64; 4],
    z: f64,
    color: [u8; 3],
    owner: Option<usize>,
}

fn shade(c: [u8; 3], k: f64) -> [u8; 3] {
    c.map(|v| (v as f64 * k).round().clamp(0.0, 255.0) as u8)
}

fn faces(spec: &SceneSpec, state: &SimState) -> Vec<Face> {
    let mut out = Vec::new();
    let mut face = |poly: Polygon, hole: Option<Polygon>, z: f64, color: [u8; 3], owner: Option<usize>| {
        out.push(Face { bounds: aabb(&poly), poly, hole, z, color, owner });
    };
    for (i, (o, st)) in spec.objects.iter().zip(&state.objects).enumerate() {
        let top = top_z(o, st);
        for part in world_parts(o, st) {
            match o.receptacle.and_then(|r| shrink(&part, r.wall).map(|inner| (r, inner))) {
                Some((r, inner)) => {
                    face(part, Some(inner.clone()), top, o.color, Some(i));
                    face(inner, None, st.base_z + r.floor, shade(o.color, 0.7), Some(i));
                }
                None => face(part, None, top, o.color, Some(i)),
            }
        }
    }
    let g = &state.gripper;
    let h = spec.gripper.body_size / 2.0;
    let pose = Pose2::new(g.position.x, g.position.y, g.yaw);
    let square = [[-h, -h], [h, -h], [h, h], [-h, h]].map(|q| pose.apply(q)).to_vec();
    face(square, None, g.position.z + spec.gripper.body_height, spec.gripper.color, None);
    out
}

/// Casts one ray per pixel against every horizontal face and keeps the
/// nearest hit, so taller surfaces occlude lower ones exactly. The depth
/// of a hit is its camera z, which makes deprojection land back on the
/// face.
pub(super) fn render(spec: &SceneSpec, cam: &CameraModel, state: &SimState) -> Observation {
    let (w, h) = (spec.camera.width, spec.camera.height);
    let faces = faces(spec, state);
    let origin = cam.center_world();
    let table = spec.table.color;
    let mut rgb = RgbImage::new(w, h);
    let mut depth = DepthImage::filled(w, h, 0.0);
    let mut owners: Vec<Option<usize>> = vec![None; (w * h) as usize];
    for v in 0..h {
        for u in 0..w {
            let r = cam.ray_world(ImagePoint::new(u as f64, v as f64));
            if r.z >= 0.0 {
                continue;
            }
            let mut best = (-origin.z / r.z, table, None);
            for f in &faces {
                let t = (f.z - origin.z) / r.z;
                if !(t > 0.0) || t >= best.0 {
                    continue;
                }
                let (x, y) = (origin.x + r.x * t, origin.y + r.y * t);
                let b = f.bounds;
                if x < b[0] || x > b[1] || y < b[2] || y > b[3] || !contains(&f.poly, [x, y]) {
                    continue;
                }
                if f.hole.as_ref().is_some_and(|hole| contains(hole, [x, y])) {
                    continue;
                }
                best = (t, f.color, f.owner);
            }
            depth.set(u, v, best.0);
            rgb.put_pixel(u, v, Rgb(best.1));
            owners[(v * w + u) as usize] = best.2;
        }
    }
    let masks = spec
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let m = BinaryMask::from_fn(w, h, |u, v| owners[(v * w + u) as usize] == Some(i));
            (o.name.clone(), m)
        })
        .collect();
    Observation { rgb, depth, masks, proprioception: state.gripper }
}
