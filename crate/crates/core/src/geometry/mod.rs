//! Camera geometry: pinhole projection, minimal absolute pose (P3P),
//! Gauss-Newton refinement and RANSAC.

mod p3p;
mod ransac;
mod refine;

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::features::CameraIntrinsics;

pub use p3p::p3p_solve;
pub use ransac::{ransac_pnp, reprojection_inliers, RansacOutcome, RansacParams};
pub use refine::{refine_pose, refine_pose_traced, reprojection_cost, residual_jacobian, RefineTrace};

/// Rigid transform taking world coordinates to camera coordinates:
/// `x_cam = rotation * x_world + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, re-orthonormalizing the rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: orthonormalize(&rotation),
            translation,
        }
    }

    /// Pose from an axis-angle rotation vector and translation.
    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: exp_so3(&axis_angle),
            translation,
        }
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Maps camera coordinates back to world coordinates.
    pub fn to_world(&self, p_cam: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p_cam - self.translation)
    }

    /// `[R | t]` as 12 row-major values.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t[0],
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t[1],
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t[2],
        ]
    }

    /// Inverse of [`Pose::to_row_major`]. The rotation is taken verbatim.
    pub fn from_row_major(v: &[f64; 12]) -> Pose {
        Pose {
            rotation: Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]),
            translation: Vector3::new(v[3], v[7], v[11]),
        }
    }

    /// Largest deviation of `RᵀR` from identity and of `det R` from one.
    pub fn orthonormality_error(&self) -> f64 {
        let r = &self.rotation;
        let gram = (r.transpose() * r - Matrix3::identity()).abs().max();
        gram.max((r.determinant() - 1.0).abs())
    }

    /// Angle in radians of the rotation taking `self` to `other`.
    pub fn rotation_error(&self, other: &Pose) -> f64 {
        rotation_angle(&(self.rotation * other.rotation.transpose()))
    }

    pub fn translation_error(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Distance between the two camera centers.
    pub fn center_error(&self, other: &Pose) -> f64 {
        (self.center() - other.center()).norm()
    }
}

/// A 3D world point observed at a pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub point3d: Vector3<f64>,
    pub pixel: Vector2<f64>,
    /// Keyframe the 3D point came from.
    pub source_keyframe: Option<u32>,
}

impl Correspondence {
    pub fn new(point3d: Vector3<f64>, pixel: Vector2<f64>) -> Self {
        Self {
            point3d,
            pixel,
            source_keyframe: None,
        }
    }
}

/// Pixel of a camera-frame point.
pub fn project_camera(p: &Vector3<f64>, k: &CameraIntrinsics) -> Result<Vector2<f64>> {
    if !(p.z > 0.0) {
        return Err(Error::BehindCamera { depth: p.z });
    }
    Ok(Vector2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
}

/// Pixel of a world point seen from `pose`.
pub fn project(point: &Vector3<f64>, pose: &Pose, k: &CameraIntrinsics) -> Result<Vector2<f64>> {
    project_camera(&pose.transform(point), k)
}

/// Unit bearing vector through a pixel.
pub fn bearing(pixel: &Vector2<f64>, k: &CameraIntrinsics) -> Vector3<f64> {
    Vector3::new((pixel.x - k.cx) / k.fx, (pixel.y - k.cy) / k.fy, 1.0).normalize()
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation matrix of an axis-angle vector.
pub fn exp_so3(w: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::new(*w).into_inner()
}

pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    // acos loses precision near zero; use the skew part there
    let s = 0.5
        * Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm();
    s.atan2(c)
}

/// Nearest rotation matrix in the Frobenius sense.
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut fix = Matrix3::identity();
        fix[(2, 2)] = -1.0;
        r = u * fix * vt;
    }
    r
}
