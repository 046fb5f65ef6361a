use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BinaryMask, CameraModel, DepthImage, GeometryError, Pixel, Point3, Result, Vector3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspConfig {
    /// Friction cone half-angle in degrees.
    pub friction_half_angle_deg: f64,
    /// Maximum gripper opening in meters.
    pub max_aperture: f64,
    /// Gaussian sigma (pixels) applied to the mask before taking gradients.
    pub smoothing_sigma: f64,
    pub seed: u64,
}

impl Default for GraspConfig {
    fn default() -> Self {
        Self {
            friction_half_angle_deg: 15.0,
            max_aperture: 0.085,
            smoothing_sigma: 2.0,
            seed: 0,
        }
    }
}

/// A top-down 4-DoF grasp: position, yaw about world z, and opening width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspProposal {
    /// Midpoint of the two contacts, world frame.
    pub center: Point3,
    /// Angle of the contact line about world z, in `(-pi/2, pi/2]`.
    pub yaw: f64,
    /// Distance between the contacts in meters.
    pub width: f64,
    pub contacts: [Point3; 2],
    /// Cosine of the deviation of the contact normals from anti-parallel.
    pub quality: f64,
    pub contact_pixels: [Pixel; 2],
    /// Outward unit normals in the image plane at each contact.
    pub normals: [[f64; 2]; 2],
}

/// Samples `n` antipodal grasps on the object given by `mask`.
///
/// Edge pixels of the mask are paired by casting a ray inward along the
/// outward normal of the smoothed mask. A pair is kept when the normals are
/// anti-parallel within the friction cone, the contact line lies inside both
/// cones, and the lifted 3D separation fits in the gripper. Only the mask's
/// bounding box is examined, which is equivalent to cropping the depth image
/// to the object.
///
/// When more than `n` pairs exist a seeded uniform subset is drawn; when fewer
/// exist the pairs are repeated with sub-millimeter sideways jitter so the
/// output always has exactly `n` entries. The result is sorted by quality.
pub fn sample_antipodal_grasps(
    depth: &DepthImage,
    mask: &BinaryMask,
    cam: &CameraModel,
    n: usize,
    cfg: &GraspConfig,
) -> Result<Vec<GraspProposal>> {
    if depth.width != mask.width() || depth.height != mask.height() {
        return Err(GeometryError::DimensionMismatch(format!(
            "depth {}x{} vs mask {}x{}",
            depth.width,
            depth.height,
            mask.width(),
            mask.height()
        )));
    }
    let (u0, v0, u1, v1) = mask.bounding_box().ok_or(GeometryError::EmptyMask)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let field = NormalField::new(mask, (u0, v0, u1, v1), cfg.smoothing_sigma);
    let cos_cone = cfg.friction_half_angle_deg.to_radians().cos();

    let mut seen = BTreeSet::new();
    let mut pairs = Vec::new();
    for v in v0..=v1 {
        for u in u0..=u1 {
            let p1 = Pixel::new(u, v);
            if !is_edge(mask, p1) {
                continue;
            }
            let Some(n1) = field.normal(p1) else { continue };
            let Some(p2) = march_inward(mask, p1, n1) else { continue };
            let key = if p1 < p2 { (p1, p2) } else { (p2, p1) };
            if seen.contains(&key) {
                continue;
            }
            let Some(n2) = field.normal(p2) else { continue };
            let anti = -(n1[0] * n2[0] + n1[1] * n2[1]);
            if anti < cos_cone {
                continue;
            }
            let (lx, ly) = (p2.u as f64 - p1.u as f64, p2.v as f64 - p1.v as f64);
            let ll = (lx * lx + ly * ly).sqrt();
            let (lx, ly) = (lx / ll, ly / ll);
            // Line must lie in both friction cones.
            if -(lx * n1[0] + ly * n1[1]) < cos_cone || (lx * n2[0] + ly * n2[1]) < cos_cone {
                continue;
            }
            let Ok(c1) = lift(depth, cam, p1) else { continue };
            let Ok(c2) = lift(depth, cam, p2) else { continue };
            let width = (c2 - c1).norm();
            if !(width > 0.0) || width > cfg.max_aperture {
                continue;
            }
            seen.insert(key);
            pairs.push(make_proposal([c1, c2], [p1, p2], [n1, n2], anti.min(1.0)));
        }
    }
    if pairs.is_empty() {
        return Err(GeometryError::NoGraspFound);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out: Vec<GraspProposal> = if pairs.len() > n {
        let mut idx = sample(&mut rng, pairs.len(), n).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| pairs[i].clone()).collect()
    } else {
        let m = pairs.len();
        let mut out = pairs.clone();
        for i in 0..(n - m) {
            let base = &pairs[i % m];
            let round = (i / m + 1) as f64;
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            out.push(jitter(base, sign * 0.0005 * round));
        }
        out
    };
    out.sort_by(|a, b| b.quality.total_cmp(&a.quality));
    Ok(out)
}

/// Proposal whose center is nearest to `predicted`; ties prefer higher
/// quality, then lower index.
pub fn nearest_grasp(proposals: &[GraspProposal], predicted: &Point3) -> Result<GraspProposal> {
    let mut best: Option<(usize, f64)> = None;
    for (i, g) in proposals.iter().enumerate() {
        let d = (g.center - predicted).norm_squared();
        let better = match best {
            None => true,
            Some((bi, bd)) => d < bd || (d == bd && g.quality > proposals[bi].quality),
        };
        if better {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| proposals[i].clone())
        .ok_or(GeometryError::EmptyProposalSet)
}

fn lift(depth: &DepthImage, cam: &CameraModel, p: Pixel) -> Result<Point3> {
    cam.deproject_world(p.to_point(), depth.depth_at(p)?)
}

fn make_proposal(
    contacts: [Point3; 2],
    pixels: [Pixel; 2],
    normals: [[f64; 2]; 2],
    quality: f64,
) -> GraspProposal {
    let center = nalgebra::center(&contacts[0], &contacts[1]);
    let d = contacts[1] - contacts[0];
    GraspProposal {
        center,
        yaw: normalize_half_turn(d.y.atan2(d.x)),
        width: d.norm(),
        contacts,
        quality,
        contact_pixels: pixels,
        normals,
    }
}

fn jitter(base: &GraspProposal, offset: f64) -> GraspProposal {
    let side = Vector3::new(-base.yaw.sin(), base.yaw.cos(), 0.0) * offset;
    let mut g = base.clone();
    g.contacts = [base.contacts[0] + side, base.contacts[1] + side];
    g.center = nalgebra::center(&g.contacts[0], &g.contacts[1]);
    g
}

/// Maps an angle to `(-pi/2, pi/2]`; a parallel-jaw grasp is symmetric under
/// a half turn.
pub(crate) fn normalize_half_turn(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut a = a.rem_euclid(PI);
    if a > PI / 2.0 {
        a -= PI;
    }
    a
}

fn is_edge(mask: &BinaryMask, p: Pixel) -> bool {
    let (u, v) = (p.u as i64, p.v as i64);
    mask.get(u, v)
        && (!mask.get(u + 1, v) || !mask.get(u - 1, v) || !mask.get(u, v + 1) || !mask.get(u, v - 1))
}

/// Walks from `p` against the outward normal until leaving the mask and
/// returns the last foreground pixel, or `None` if it is `p` itself.
fn march_inward(mask: &BinaryMask, p: Pixel, n: [f64; 2]) -> Option<Pixel> {
    let limit = 2.0 * (mask.width() as f64).hypot(mask.height() as f64);
    let (mut last, mut t) = (p, 0.5);
    while t < limit {
        let (qu, qv) = (p.u as f64 - n[0] * t, p.v as f64 - n[1] * t);
        let (ru, rv) = (qu.round() as i64, qv.round() as i64);
        if !mask.get(ru, rv) {
            break;
        }
        last = Pixel::new(ru as u32, rv as u32);
        t += 0.5;
    }
    (last != p).then_some(last)
}

/// Outward normals from the gradient of a Gaussian-smoothed mask, computed
/// over a window around the object.
struct NormalField {
    u0: i64,
    v0: i64,
    w: usize,
    h: usize,
    smooth: Vec<f64>,
}

impl NormalField {
    fn new(mask: &BinaryMask, bbox: (u32, u32, u32, u32), sigma: f64) -> Self {
        let r = (3.0 * sigma).ceil().max(1.0) as i64;
        let margin = r + 2;
        let u0 = bbox.0 as i64 - margin;
        let v0 = bbox.1 as i64 - margin;
        let w = (bbox.2 as i64 - bbox.0 as i64 + 1 + 2 * margin) as usize;
        let h = (bbox.3 as i64 - bbox.1 as i64 + 1 + 2 * margin) as usize;
        let kernel: Vec<f64> = {
            let k: Vec<f64> = (-r..=r)
                .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
                .collect();
            let s: f64 = k.iter().sum();
            k.into_iter().map(|x| x / s).collect()
        };
        let raw = |x: i64, y: i64| if mask.get(u0 + x, v0 + y) { 1.0 } else { 0.0 };
        let mut tmp = vec![0.0; w * h];
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                tmp[y as usize * w + x as usize] = (-r..=r)
                    .map(|i| kernel[(i + r) as usize] * raw(x + i, y))
                    .sum();
            }
        }
        let at = |x: i64, y: i64| {
            if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                0.0
            } else {
                tmp[y as usize * w + x as usize]
            }
        };
        let mut smooth = vec![0.0; w * h];
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                smooth[y as usize * w + x as usize] = (-r..=r)
                    .map(|i| kernel[(i + r) as usize] * at(x, y + i))
                    .sum();
            }
        }
        Self { u0, v0, w, h, smooth }
    }

    fn value(&self, u: i64, v: i64) -> f64 {
        let (x, y) = (u - self.u0, v - self.v0);
        if x < 0 || y < 0 || x >= self.w as i64 || y >= self.h as i64 {
            return 0.0;
        }
        self.smooth[y as usize * self.w + x as usize]
    }

    fn normal(&self, p: Pixel) -> Option<[f64; 2]> {
        let (u, v) = (p.u as i64, p.v as i64);
        let gx = 0.5 * (self.value(u + 1, v) - self.value(u - 1, v));
        let gy = 0.5 * (self.value(u, v + 1) - self.value(u, v - 1));
        let g = gx.hypot(gy);
        (g > 1e-6).then(|| [-gx / g, -gy / g])
    }
}
