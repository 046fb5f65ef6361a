use serde::{Deserialize, Serialize};

use super::{BinaryMask, Pixel, Result};

/// Closed boundary of a mask region; the last point is adjacent to the first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contour {
    pub points: Vec<Pixel>,
}

impl Contour {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

// Counter-clockwise on screen (v grows downward), starting at north.
const RING: [(i64, i64); 8] = [
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
];

fn ring_index(d: (i64, i64)) -> usize {
    RING.iter()
        .position(|r| *r == d)
        .expect("backtrack is always an 8-neighbor")
}

/// Moore-neighbor boundary trace of the largest 8-connected component.
///
/// Starts at the topmost-then-leftmost pixel of the component and walks the
/// boundary counter-clockwise as seen on screen (down the left side first).
/// Terminates when the walk is about to leave the start pixel by the same
/// move it first left it with.
pub fn extract_contour(mask: &BinaryMask) -> Result<Contour> {
    let comp = mask.largest_component()?;
    let start = comp.pixels().next().expect("largest component is non-empty");
    let at = |p: (i64, i64)| comp.get(p.0, p.1);

    let s = (start.u as i64, start.v as i64);
    // The pixel above the topmost pixel is background.
    let start_back = (s.0, s.1 - 1);
    let mut points = vec![start];
    let (mut c, mut b) = (s, start_back);
    let mut first_move = None;
    let limit = 8 * comp.count() + 16;

    for _ in 0..limit {
        let bi = ring_index((b.0 - c.0, b.1 - c.1));
        let mut next = None;
        let mut prev = b;
        for step in 1..8 {
            let d = RING[(bi + step) % 8];
            let q = (c.0 + d.0, c.1 + d.1);
            if at(q) {
                next = Some((q, prev));
                break;
            }
            prev = q;
        }
        let Some((p, nb)) = next else {
            // Isolated pixel.
            break;
        };
        if c == s {
            match first_move {
                None => first_move = Some(p),
                Some(f) if f == p => {
                    points.pop();
                    break;
                }
                Some(_) => {}
            }
        }
        c = p;
        b = nb;
        points.push(Pixel::new(c.0 as u32, c.1 as u32));
    }
    Ok(Contour { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryError;

    fn is_8_adjacent(a: Pixel, b: Pixel) -> bool {
        let du = (a.u as i64 - b.u as i64).abs();
        let dv = (a.v as i64 - b.v as i64).abs();
        du <= 1 && dv <= 1 && (du + dv) > 0
    }

    #[test]
    fn filled_square_border_ccw() {
        let m = BinaryMask::from_fn(3, 3, |_, _| true);
        let c = extract_contour(&m).unwrap();
        let expect = [(0, 0), (0, 1), (0, 2), (1, 2), (2, 2), (2, 1), (2, 0), (1, 0)]
            .map(|(u, v)| Pixel::new(u, v));
        assert_eq!(c.points, expect);
    }

    #[test]
    fn diagonal_ellipse_closes_once() {
        let (cu, cv, a, b, th) = (81.6f64, 61.3f64, 14.93f64, 6.3f64, 2.371f64);
        let m = BinaryMask::from_fn(120, 120, |u, v| {
            let (x, y) = (u as f64 - cu, v as f64 - cv);
            let (p, q) = (x * th.cos() + y * th.sin(), -x * th.sin() + y * th.cos());
            (p / a).powi(2) + (q / b).powi(2) <= 1.0
        });
        let c = extract_contour(&m).unwrap();
        let n = c.len();
        assert!(n < m.count(), "{n} points for {} pixels", m.count());
        for i in 0..n {
            assert!(is_8_adjacent(c.points[i], c.points[(i + 1) % n]));
        }
    }

    #[test]
    fn single_pixel_is_length_one() {
        let m = BinaryMask::from_pixels(5, 5, [Pixel::new(2, 3)]);
        assert_eq!(extract_contour(&m).unwrap().points, vec![Pixel::new(2, 3)]);
    }

    #[test]
    fn empty_mask() {
        assert_eq!(
            extract_contour(&BinaryMask::new(3, 3)),
            Err(GeometryError::EmptyMask)
        );
    }

    #[test]
    fn traces_largest_blob_only() {
        let big = BinaryMask::from_fn(40, 40, |u, v| u < 10 && v < 5);
        let small = BinaryMask::from_fn(40, 40, |u, v| (30..35).contains(&u) && (30..32).contains(&v));
        let c = extract_contour(&big.union(&small).unwrap()).unwrap();
        assert!(c.points.iter().all(|p| big.contains(*p)));
        // Border of a 10x5 rectangle.
        assert_eq!(c.len(), 2 * 10 + 2 * 5 - 4);
    }

    #[test]
    fn contour_is_closed_and_connected_on_disk() {
        let m = BinaryMask::from_fn(64, 64, |u, v| {
            let (du, dv) = (u as f64 - 31.5, v as f64 - 30.2);
            du * du + dv * dv <= 20.0 * 20.0
        });
        let c = extract_contour(&m).unwrap();
        assert!(c.len() > 100);
        for w in c.points.windows(2) {
            assert!(is_8_adjacent(w[0], w[1]), "{:?}", w);
        }
        assert!(is_8_adjacent(*c.points.last().unwrap(), c.points[0]));
        // Every contour pixel is foreground with a background 4-neighbor.
        for p in &c.points {
            assert!(m.contains(*p));
            let (u, v) = (p.u as i64, p.v as i64);
            assert!(!m.get(u + 1, v) || !m.get(u - 1, v) || !m.get(u, v + 1) || !m.get(u, v - 1));
        }
    }

    #[test]
    fn concave_shape_closes() {
        // U shape.
        let m = BinaryMask::from_fn(12, 12, |u, v| (u < 3 || u >= 9 || v >= 9) && v >= 1);
        let c = extract_contour(&m).unwrap();
        for w in c.points.windows(2) {
            assert!(is_8_adjacent(w[0], w[1]));
        }
        assert!(is_8_adjacent(*c.points.last().unwrap(), c.points[0]));
    }
}
