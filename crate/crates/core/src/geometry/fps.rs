use super::{Contour, GeometryError, Pixel, Result};

/// Greedy max-min (farthest point) selection of `k` contour points.
///
/// The seed is the contour point farthest from `centroid`. Each following
/// pick maximizes the distance to the nearest already-selected point. All ties
/// go to the lowest contour index. Distances are exact squared integers.
///
/// Contours shorter than three points, or shorter than `k`, are degenerate.
pub fn farthest_point_sampling(contour: &Contour, k: usize, centroid: Pixel) -> Result<Vec<Pixel>> {
    let pts = &contour.points;
    if k == 0 || pts.len() < k || pts.len() < 3 {
        return Err(GeometryError::DegenerateContour { len: pts.len(), k });
    }

    let seed = argmax(pts.iter().map(|p| p.dist2(centroid)));
    let mut selected = Vec::with_capacity(k);
    selected.push(pts[seed]);

    let mut nearest: Vec<i64> = pts.iter().map(|p| p.dist2(pts[seed])).collect();
    while selected.len() < k {
        let next = argmax(nearest.iter().copied());
        let chosen = pts[next];
        selected.push(chosen);
        for (d, p) in nearest.iter_mut().zip(pts) {
            *d = (*d).min(p.dist2(chosen));
        }
    }
    Ok(selected)
}

/// Index of the first maximum.
fn argmax(values: impl Iterator<Item = i64>) -> usize {
    let mut best = (0usize, i64::MIN);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
