//! Visual marks for the low-level query: labeled candidate keypoints on the
//! objects involved in a subtask and a chess-notation grid for free-space
//! waypoints.
//!
//! Keypoints on the in-hand object are labeled `P0, P1, ...` and drawn red;
//! keypoints on the unattached object are `Q0, Q1, ...` and drawn blue. Each
//! object gets `K` boundary points from farthest point sampling plus its
//! center, which is always the last label.

mod font;
mod grid;
mod render;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grid::{
    build_grid, parse_tile_name, sample_point_in_tile, tile_bounds, GridSpec, PixelRect, TileId,
    DEFAULT_GRID_COLS, DEFAULT_GRID_ROWS,
};
pub use render::{render_marks, AnnotatedImage, CAPTION_SCALE, DOT_RADIUS};
pub(crate) use render::encode_png;

use crate::geometry::{
    extract_contour, farthest_point_sampling, mask_centroid, BinaryMask, GeometryError, Pixel,
};

/// Default number of boundary keypoints per object.
pub const DEFAULT_BOUNDARY_POINTS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarksError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("malformed tile name {0:?}")]
    MalformedTile(String),
    #[error("tile {0:?} is outside the grid")]
    TileOutOfRange(String),
    #[error("unknown label {label:?}; valid labels are {valid:?}")]
    UnknownLabel { label: String, valid: Vec<String> },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T, E = MarksError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectRole {
    Grasped,
    Unattached,
}

impl ObjectRole {
    pub fn prefix(self) -> char {
        match self {
            ObjectRole::Grasped => 'P',
            ObjectRole::Unattached => 'Q',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    Boundary,
    Center,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeypointCandidate {
    pub label: String,
    #[serde(flatten)]
    pub pixel: Pixel,
    pub role: ObjectRole,
    pub source: CandidateSource,
    /// Name of the object the point was proposed on.
    #[serde(default)]
    pub object: String,
}

/// `k` boundary points by farthest point sampling on the object contour plus
/// the mask center, labeled from zero in selection order with the center last.
pub fn propose_keypoints(mask: &BinaryMask, role: ObjectRole, k: usize) -> Result<Vec<KeypointCandidate>> {
    let center = mask_centroid(mask)?;
    let contour = extract_contour(mask)?;
    let boundary = farthest_point_sampling(&contour, k, center)?;
    let prefix = role.prefix();
    let mut out: Vec<KeypointCandidate> = boundary
        .into_iter()
        .enumerate()
        .map(|(i, pixel)| KeypointCandidate {
            label: format!("{prefix}{i}"),
            pixel,
            role,
            source: CandidateSource::Boundary,
            object: String::new(),
        })
        .collect();
    out.push(KeypointCandidate {
        label: format!("{prefix}{k}"),
        pixel: center,
        role,
        source: CandidateSource::Center,
        object: String::new(),
    });
    Ok(out)
}

/// Candidate keypoints and grid drawn onto one observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkSet {
    pub candidates: Vec<KeypointCandidate>,
    pub grid: GridSpec,
    #[serde(default)]
    pub base_image_id: String,
}

/// One object to annotate.
pub struct MarkedObject<'a> {
    pub name: &'a str,
    pub mask: &'a BinaryMask,
    pub role: ObjectRole,
}

impl MarkSet {
    /// Proposes keypoints for each object. Labels are numbered contiguously
    /// per role across objects, in the order given.
    pub fn build(
        objects: &[MarkedObject<'_>],
        k: usize,
        grid: GridSpec,
        base_image_id: impl Into<String>,
    ) -> Result<MarkSet> {
        let mut candidates = Vec::new();
        let mut next = [0usize; 2];
        for obj in objects {
            if obj.mask.width() != grid.width || obj.mask.height() != grid.height {
                return Err(MarksError::DimensionMismatch(format!(
                    "mask for {:?} is {}x{}, grid is {}x{}",
                    obj.name,
                    obj.mask.width(),
                    obj.mask.height(),
                    grid.width,
                    grid.height
                )));
            }
            let slot = match obj.role {
                ObjectRole::Grasped => 0,
                ObjectRole::Unattached => 1,
            };
            for mut c in propose_keypoints(obj.mask, obj.role, k)? {
                c.label = format!("{}{}", obj.role.prefix(), next[slot]);
                c.object = obj.name.to_string();
                next[slot] += 1;
                candidates.push(c);
            }
        }
        Ok(MarkSet {
            candidates,
            grid,
            base_image_id: base_image_id.into(),
        })
    }

    pub fn labels(&self) -> Vec<String> {
        self.candidates.iter().map(|c| c.label.clone()).collect()
    }

    pub fn labels_for(&self, role: ObjectRole) -> Vec<String> {
        self.candidates
            .iter()
            .filter(|c| c.role == role)
            .map(|c| c.label.clone())
            .collect()
    }

    pub fn has_role(&self, role: ObjectRole) -> bool {
        self.candidates.iter().any(|c| c.role == role)
    }

    pub fn candidate(&self, label: &str) -> Option<&KeypointCandidate> {
        let norm = normalize_label(label);
        self.candidates.iter().find(|c| c.label == norm)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mark set serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| MarksError::Io(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MarkSet> {
        let text = std::fs::read_to_string(path).map_err(|e| MarksError::Io(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| MarksError::Io(e.to_string()))
    }
}

/// Canonical label form: `p3`, `P[3]` and `P_3` all become `P3`.
pub fn normalize_label(label: &str) -> String {
    label
        .trim()
        .chars()
        .filter(|c| !matches!(c, '[' | ']' | '_' | ' ' | '$'))
        .enumerate()
        .map(|(i, c)| if i == 0 { c.to_ascii_uppercase() } else { c })
        .collect()
}

/// Pixel of the candidate carrying `label`.
pub fn resolve_selection(markset: &MarkSet, label: &str) -> Result<Pixel> {
    markset
        .candidate(label)
        .map(|c| c.pixel)
        .ok_or_else(|| MarksError::UnknownLabel {
            label: label.to_string(),
            valid: markset.labels(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(w: u32, h: u32) -> BinaryMask {
        BinaryMask::from_fn(w, h, |u, v| (10..30).contains(&u) && (10..30).contains(&v))
    }

    #[test]
    fn square_k4_has_corners_and_center() {
        let m = square(64, 64);
        let c = propose_keypoints(&m, ObjectRole::Grasped, 4).unwrap();
        let labels: Vec<_> = c.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, ["P0", "P1", "P2", "P3", "P4"]);
        assert_eq!(c[4].source, CandidateSource::Center);
        assert_eq!(c[4].pixel, Pixel::new(20, 20));
        let mut corners: Vec<_> = c[..4].iter().map(|c| c.pixel).collect();
        corners.sort();
        assert_eq!(
            corners,
            [Pixel::new(10, 10), Pixel::new(10, 29), Pixel::new(29, 10), Pixel::new(29, 29)]
        );
    }

    #[test]
    fn k_plus_one_candidates_with_role_prefix() {
        let m = square(64, 64);
        let c = propose_keypoints(&m, ObjectRole::Unattached, 8).unwrap();
        assert_eq!(c.len(), 9);
        assert!(c.iter().all(|c| c.label.starts_with('Q') && m.contains(c.pixel)));
    }

    #[test]
    fn markset_numbers_roles_contiguously() {
        let a = square(64, 64);
        let b = BinaryMask::from_fn(64, 64, |u, v| (40..60).contains(&u) && (35..50).contains(&v));
        let grid = build_grid(64, 64, 5, 5).unwrap();
        let objs = [
            MarkedObject { name: "a", mask: &a, role: ObjectRole::Grasped },
            MarkedObject { name: "b", mask: &b, role: ObjectRole::Grasped },
            MarkedObject { name: "b", mask: &b, role: ObjectRole::Unattached },
        ];
        let ms = MarkSet::build(&objs, 3, grid, "obs").unwrap();
        assert_eq!(ms.labels_for(ObjectRole::Grasped), (0..8).map(|i| format!("P{i}")).collect::<Vec<_>>());
        assert_eq!(ms.labels_for(ObjectRole::Unattached).len(), 4);
        assert_eq!(ms.candidate("P5").unwrap().object, "b");
    }

    #[test]
    fn resolve_and_unknown() {
        let m = square(64, 64);
        let grid = build_grid(64, 64, 5, 5).unwrap();
        let ms = MarkSet::build(&[MarkedObject { name: "sq", mask: &m, role: ObjectRole::Grasped }], 4, grid, "x").unwrap();
        assert_eq!(resolve_selection(&ms, "P4").unwrap(), Pixel::new(20, 20));
        assert_eq!(resolve_selection(&ms, "p[4]").unwrap(), Pixel::new(20, 20));
        match resolve_selection(&ms, "P9") {
            Err(MarksError::UnknownLabel { valid, .. }) => assert_eq!(valid.len(), 5),
            other => panic!("{other:?}"),
        }
        // No unattached object means no Q labels.
        assert!(resolve_selection(&ms, "Q0").is_err());
    }

    #[test]
    fn markset_json_schema() {
        let m = square(64, 64);
        let grid = build_grid(64, 64, 5, 5).unwrap();
        let ms = MarkSet::build(&[MarkedObject { name: "sq", mask: &m, role: ObjectRole::Unattached }], 2, grid, "x").unwrap();
        let v: serde_json::Value = serde_json::from_str(&ms.to_json()).unwrap();
        let c0 = &v["candidates"][0];
        for key in ["label", "u", "v", "role", "source"] {
            assert!(c0.get(key).is_some(), "missing {key}");
        }
        assert_eq!(c0["role"], "unattached");
        assert_eq!(v["grid"], serde_json::json!({"m": 5, "n": 5, "w": 64, "h": 64}));
        let back: MarkSet = serde_json::from_value(v).unwrap();
        assert_eq!(back, ms);
    }

    #[test]
    fn degenerate_object() {
        let m = BinaryMask::from_pixels(10, 10, [Pixel::new(3, 3)]);
        assert!(matches!(
            propose_keypoints(&m, ObjectRole::Grasped, 8),
            Err(MarksError::Geometry(GeometryError::DegenerateContour { .. }))
        ));
        assert!(matches!(
            propose_keypoints(&BinaryMask::new(4, 4), ObjectRole::Grasped, 1),
            Err(MarksError::Geometry(GeometryError::EmptyMask))
        ));
    }
}
