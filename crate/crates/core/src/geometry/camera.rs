use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use super::{GeometryError, Point3, Result, Vector3};

/// Continuous image coordinate in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
}

impl ImagePoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Rigid transform stored as an explicit rotation matrix and translation,
/// so that a JSON round trip is exact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_inverse(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation.transpose() * (p.coords - self.translation))
    }

    /// Row-major 4x4 homogeneous matrix.
    pub fn to_row_major(&self) -> [f64; 16] {
        let r = self.rotation.matrix();
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    /// Parses a row-major homogeneous matrix. The rotation block must be
    /// orthonormal with determinant +1 to within 1e-9.
    pub fn from_row_major(m: &[f64; 16]) -> Result<Self> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::InvalidCamera("non-finite extrinsic".into()));
        }
        if m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0 {
            return Err(GeometryError::InvalidCamera(
                "extrinsic bottom row must be [0, 0, 0, 1]".into(),
            ));
        }
        let r = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if err > 1e-9 {
            return Err(GeometryError::InvalidCamera(format!(
                "rotation is not orthonormal (error {err:e})"
            )));
        }
        if (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(GeometryError::InvalidCamera(
                "rotation determinant is not +1".into(),
            ));
        }
        Ok(Self {
            rotation: Rotation3::from_matrix_unchecked(r),
            translation: Vector3::new(m[3], m[7], m[11]),
        })
    }
}

/// Pinhole intrinsics plus the camera-to-world extrinsic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraJson", into = "CameraJson")]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub extrinsic: RigidTransform,
}

#[derive(Serialize, Deserialize)]
struct CameraJson {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    extrinsic: [f64; 16],
}

impl TryFrom<CameraJson> for CameraModel {
    type Error = GeometryError;

    fn try_from(j: CameraJson) -> Result<Self> {
        CameraModel::new(j.fx, j.fy, j.cx, j.cy, RigidTransform::from_row_major(&j.extrinsic)?)
    }
}

impl From<CameraModel> for CameraJson {
    fn from(c: CameraModel) -> Self {
        CameraJson {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            extrinsic: c.extrinsic.to_row_major(),
        }
    }
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, extrinsic: RigidTransform) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !cx.is_finite() || !cy.is_finite() {
            return Err(GeometryError::InvalidCamera(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            extrinsic,
        })
    }

    /// A camera at `(x, y, height)` looking straight down at the table.
    /// Image up is world +x and image right is world -y.
    pub fn top_down(x: f64, y: f64, height: f64, focal: f64, width: u32, height_px: u32) -> Self {
        let r = Matrix3::new(0.0, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0);
        Self {
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height_px as f64 / 2.0,
            extrinsic: RigidTransform {
                rotation: Rotation3::from_matrix_unchecked(r),
                translation: Vector3::new(x, y, height),
            },
        }
    }

    /// Same pose, intrinsics scaled for an image resized by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            fx: self.fx * factor,
            fy: self.fy * factor,
            cx: self.cx * factor,
            cy: self.cy * factor,
            extrinsic: self.extrinsic,
        }
    }

    /// Back-projects a pixel at z-depth `depth` into the camera frame.
    pub fn deproject(&self, p: ImagePoint, depth: f64) -> Result<Point3> {
        if !(depth > 0.0) || !depth.is_finite() {
            return Err(GeometryError::InvalidDepth(depth));
        }
        Ok(Point3::new(
            (p.u - self.cx) * depth / self.fx,
            (p.v - self.cy) * depth / self.fy,
            depth,
        ))
    }

    pub fn deproject_world(&self, p: ImagePoint, depth: f64) -> Result<Point3> {
        Ok(self.extrinsic.apply(&self.deproject(p, depth)?))
    }

    /// Projects a camera-frame point onto the image plane.
    pub fn project(&self, p: &Point3) -> Result<ImagePoint> {
        if !(p.z > 0.0) {
            return Err(GeometryError::BehindCamera(p.z));
        }
        Ok(ImagePoint::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    pub fn project_world(&self, p: &Point3) -> Result<ImagePoint> {
        self.project(&self.world_to_camera(p))
    }

    pub fn world_to_camera(&self, p: &Point3) -> Point3 {
        self.extrinsic.apply_inverse(p)
    }

    pub fn camera_to_world(&self, p: &Point3) -> Point3 {
        self.extrinsic.apply(p)
    }

    pub fn center_world(&self) -> Point3 {
        Point3::from(self.extrinsic.translation)
    }

    /// World-frame direction of the viewing ray through `p` (not normalized;
    /// its camera-frame z component is 1).
    pub fn ray_world(&self, p: ImagePoint) -> Vector3 {
        let d = Vector3::new((p.u - self.cx) / self.fx, (p.v - self.cy) / self.fy, 1.0);
        self.extrinsic.rotation * d
    }

    /// Intersects the viewing ray through `p` with the horizontal world plane
    /// at height `z`. Used to lift free-space waypoints whose height is known.
    pub fn lift_to_height(&self, p: ImagePoint, z: f64) -> Result<Point3> {
        let o = self.center_world();
        let d = self.ray_world(p);
        if d.z.abs() < 1e-12 {
            return Err(GeometryError::BehindCamera(0.0));
        }
        let t = (z - o.z) / d.z;
        if !(t > 0.0) {
            return Err(GeometryError::BehindCamera(t));
        }
        Ok(o + d * t)
    }
}
