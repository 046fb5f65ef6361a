//! Image-space and camera-space geometry: masks, contours, farthest point
//! sampling, the pinhole camera, depth images and antipodal grasp sampling.
//!
//! Everything here is a pure function of its inputs. Randomized routines take
//! an explicit seed.

mod camera;
mod contour;
mod depth;
mod fps;
mod grasp;
mod mask;

pub use camera::{CameraModel, ImagePoint, RigidTransform};
pub use contour::{extract_contour, Contour};
pub use depth::{DepthImage, DEFAULT_FAR_PLANE};
pub use fps::farthest_point_sampling;
pub use grasp::{nearest_grasp, sample_antipodal_grasps, GraspConfig, GraspProposal};
pub use mask::{mask_centroid, BinaryMask};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A 3D point in meters. The frame (camera or world) is given by context.
pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;

/// Integer pixel coordinate: `u` is the column (rightward), `v` the row (downward).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub u: u32,
    pub v: u32,
}

impl Pixel {
    pub const fn new(u: u32, v: u32) -> Self {
        Self { u, v }
    }

    pub fn dist2(self, other: Pixel) -> i64 {
        let du = self.u as i64 - other.u as i64;
        let dv = self.v as i64 - other.v as i64;
        du * du + dv * dv
    }

    pub fn to_point(self) -> ImagePoint {
        ImagePoint::new(self.u as f64, self.v as f64)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("contour of length {len} is degenerate for k = {k}")]
    DegenerateContour { len: usize, k: usize },
    #[error("invalid depth {0} m")]
    InvalidDepth(f64),
    #[error("point is behind the camera (camera z = {0})")]
    BehindCamera(f64),
    #[error("no antipodal grasp found")]
    NoGraspFound,
    #[error("empty grasp proposal set")]
    EmptyProposalSet,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
    #[error("image io: {0}")]
    Io(String),
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;
