//! Convex polygon helpers in the table plane. Polygons are counter-clockwise
//! lists of `[x, y]` vertices.

use serde::{Deserialize, Serialize};

pub type Vec2 = [f64; 2];
pub type Polygon = Vec<Vec2>;

/// Planar pose: position and yaw about z.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        let (s, c) = self.yaw.sin_cos();
        [self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]]
    }

    pub fn inverse_apply(&self, p: Vec2) -> Vec2 {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (p[0] - self.x, p[1] - self.y);
        [c * dx + s * dy, -s * dx + c * dy]
    }

    pub fn rotate(&self, v: Vec2) -> Vec2 {
        let (s, c) = self.yaw.sin_cos();
        [c * v[0] - s * v[1], s * v[0] + c * v[1]]
    }
}

pub fn cross(o: Vec2, a: Vec2, b: Vec2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

pub fn signed_area(p: &[Vec2]) -> f64 {
    let n = p.len();
    (0..n)
        .map(|i| {
            let (a, b) = (p[i], p[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

/// Same polygon in counter-clockwise order.
pub fn ccw(mut p: Polygon) -> Polygon {
    if signed_area(&p) < 0.0 {
        p.reverse();
    }
    p
}

pub fn centroid(p: &[Vec2]) -> Vec2 {
    let a = signed_area(p);
    let n = p.len();
    if a.abs() < 1e-15 {
        let s = p.iter().fold([0.0, 0.0], |s, q| [s[0] + q[0], s[1] + q[1]]);
        return [s[0] / n as f64, s[1] / n as f64];
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let (u, v) = (p[i], p[(i + 1) % n]);
        let f = u[0] * v[1] - v[0] * u[1];
        cx += (u[0] + v[0]) * f;
        cy += (u[1] + v[1]) * f;
    }
    [cx / (6.0 * a), cy / (6.0 * a)]
}

/// Boundary counts as inside.
pub fn contains(p: &[Vec2], q: Vec2) -> bool {
    let n = p.len();
    n >= 3 && (0..n).all(|i| cross(p[i], p[(i + 1) % n], q) >= -1e-12)
}

pub fn aabb(p: &[Vec2]) -> [f64; 4] {
    p.iter().fold(
        [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY],
        |b, q| [b[0].min(q[0]), b[1].max(q[0]), b[2].min(q[1]), b[3].max(q[1])],
    )
}

/// Monotone-chain convex hull, counter-clockwise, no collinear points.
pub fn convex_hull(mut pts: Vec<Vec2>) -> Polygon {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Vec2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Vec2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// `{b - a}` over both polygons: `A + t` meets `B` iff `t` lies in it.
pub fn minkowski_difference(b: &[Vec2], a: &[Vec2]) -> Polygon {
    let mut pts = Vec::with_capacity(a.len() * b.len());
    for p in b {
        for q in a {
            pts.push([p[0] - q[0], p[1] - q[1]]);
        }
    }
    convex_hull(pts)
}

/// Parameter interval `[t0, t1]` where `origin + t * dir` lies in the convex
/// polygon, or `None` when the line misses it.
pub fn line_interval(p: &[Vec2], origin: Vec2, dir: Vec2) -> Option<(f64, f64)> {
    let n = p.len();
    if n < 3 {
        return None;
    }
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let (a, b) = (p[i], p[(i + 1) % n]);
        // Inside is cross(a, b, x) >= 0, linear in t: c0 + t * c1.
        let c0 = cross(a, b, origin);
        let c1 = (b[0] - a[0]) * dir[1] - (b[1] - a[1]) * dir[0];
        if c1.abs() < 1e-15 {
            if c0 < -1e-12 {
                return None;
            }
        } else if c1 > 0.0 {
            t0 = t0.max(-c0 / c1);
        } else {
            t1 = t1.min(-c0 / c1);
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

/// Convex polygon with every edge moved inward by `d`.
pub fn shrink(p: &[Vec2], d: f64) -> Option<Polygon> {
    let n = p.len();
    let lines: Vec<(Vec2, Vec2)> = (0..n)
        .map(|i| {
            let (a, b) = (p[i], p[(i + 1) % n]);
            let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
            let l = (ex * ex + ey * ey).sqrt();
            let nrm = [-ey / l, ex / l];
            ([a[0] + nrm[0] * d, a[1] + nrm[1] * d], [ex, ey])
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    let mut along = Vec::with_capacity(n);
    for i in 0..n {
        let (p1, d1) = lines[(i + n - 1) % n];
        let (p2, d2) = lines[i];
        let den = d1[0] * d2[1] - d1[1] * d2[0];
        if den.abs() < 1e-15 {
            continue;
        }
        let t = ((p2[0] - p1[0]) * d2[1] - (p2[1] - p1[1]) * d2[0]) / den;
        out.push([p1[0] + t * d1[0], p1[1] + t * d1[1]]);
        along.push(d2);
    }
    let m = out.len();
    // Offsetting past the inradius flips edges around.
    let flipped = (0..m).any(|k| {
        let (a, b) = (out[k], out[(k + 1) % m]);
        (b[0] - a[0]) * along[k][0] + (b[1] - a[1]) * along[k][1] <= 0.0
    });
    (m >= 3 && !flipped && signed_area(&out) > 0.0).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, s: f64) -> Polygon {
        vec![[x0, y0], [x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s]]
    }

    #[test]
    fn area_centroid_contains() {
        let s = square(1.0, 2.0, 2.0);
        assert_eq!(signed_area(&s), 4.0);
        assert_eq!(centroid(&s), [2.0, 3.0]);
        assert!(contains(&s, [1.0, 2.0]));
        assert!(!contains(&s, [0.99, 2.5]));
        assert_eq!(ccw(s.iter().rev().copied().collect()), vec![[1.0, 4.0], [3.0, 4.0], [3.0, 2.0], [1.0, 2.0]].into_iter().rev().collect::<Vec<_>>());
    }

    #[test]
    fn minkowski_of_squares() {
        let m = minkowski_difference(&square(0.0, 0.0, 1.0), &square(0.0, 0.0, 1.0));
        assert_eq!(signed_area(&m), 4.0);
        assert!(contains(&m, [-1.0, -1.0]) && contains(&m, [1.0, 1.0]));
    }

    #[test]
    fn line_through_square() {
        let s = square(0.0, 0.0, 1.0);
        assert_eq!(line_interval(&s, [-2.0, 0.5], [1.0, 0.0]), Some((2.0, 3.0)));
        assert_eq!(line_interval(&s, [-2.0, 1.5], [1.0, 0.0]), None);
        let (t0, t1) = line_interval(&s, [0.5, 0.5], [0.0, -2.0]).unwrap();
        assert_eq!((t0, t1), (-0.25, 0.25));
    }

    #[test]
    fn shrink_square() {
        let s = shrink(&square(0.0, 0.0, 1.0), 0.1).unwrap();
        assert!((signed_area(&s) - 0.64).abs() < 1e-12);
        assert!(shrink(&square(0.0, 0.0, 1.0), 0.6).is_none());
    }

    #[test]
    fn pose_round_trip() {
        let p = Pose2::new(0.3, -0.2, 0.7);
        let q = p.inverse_apply(p.apply([0.1, 0.05]));
        assert!((q[0] - 0.1).abs() < 1e-15 && (q[1] - 0.05).abs() < 1e-15);
    }
}
