//! Calibrated projective camera model: projection through `K·[R|t]` plus lens
//! distortion, inverse ray casting onto the table plane, pixel transfer
//! between cameras, and a damped least-squares calibration solver.

mod calibrate;
mod distortion;
mod rig;

pub use calibrate::{calibrate, reprojection_rms, CalibrationOptions, CalibrationResult, Correspondence};
pub use distortion::{Distortion, DistortionKind};
pub use rig::{parse_correspondences, CameraRecord, Rig};

use nalgebra::{Isometry3, Matrix3, Point2, Point3, Rotation3, Translation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Plane;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("point lies behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("ray is parallel to the plane")]
    NoIntersection,
    #[error("undistortion did not converge")]
    UndistortDiverged,
    #[error("invalid camera profile: {0}")]
    InvalidProfile(String),
    #[error("need at least {needed} correspondences, got {got}")]
    InsufficientCorrespondences { needed: usize, got: usize },
    #[error("correspondences are degenerate (rank deficient problem)")]
    RankDeficient,
    #[error("calibration did not converge after {iterations} iterations (best rms {best_rms:.4} px)")]
    NonConvergence {
        iterations: usize,
        best_rms: f64,
        best: Box<CameraProfile>,
    },
    #[error("no correspondences given")]
    EmptyCorrespondences,
    #[error("unknown camera '{0}'")]
    UnknownCamera(String),
    #[error("{0}")]
    Parse(String),
}

/// Intrinsics, distortion and world→camera extrinsics of one sensor.
///
/// Pixel coordinates put the origin at the center of the top-left pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRecord", into = "CameraRecord")]
pub struct CameraProfile {
    pub name: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub distortion: Distortion,
    /// World → camera rotation.
    pub rotation: Rotation3<f64>,
    /// World → camera translation (m).
    pub translation: Vector3<f64>,
    pub width: u32,
    pub height: u32,
}

/// Pixel produced by [`transfer_pixel`]; out-of-sensor pixels are flagged,
/// never clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferredPixel {
    pub pixel: Point2<f64>,
    pub in_bounds: bool,
}

impl CameraProfile {
    /// Distortion-free camera at the world origin looking down +z.
    pub fn pinhole(name: impl Into<String>, fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Self {
        Self {
            name: name.into(),
            fx,
            fy,
            cx,
            cy,
            distortion: Distortion::default(),
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
            width,
            height,
        }
    }

    pub fn with_distortion(mut self, distortion: Distortion) -> Self {
        self.distortion = distortion;
        self
    }

    /// Places the camera center at `eye` with the optical axis through `target`.
    /// Image rows grow along the projection of `-up`.
    pub fn looking_at(mut self, eye: Point3<f64>, target: Point3<f64>, up: Vector3<f64>) -> Self {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let m = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        self.rotation = Rotation3::from_matrix_unchecked(m);
        self.translation = -(self.rotation * eye.coords);
        self
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(CameraError::InvalidProfile(format!("{}: focal lengths must be positive", self.name)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::InvalidProfile(format!("{}: sensor size must be positive", self.name)));
        }
        let r = self.rotation.matrix();
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        if ortho >= 1e-9 || (r.determinant() - 1.0).abs() >= 1e-9 {
            return Err(CameraError::InvalidProfile(format!("{}: rotation is not a proper rotation", self.name)));
        }
        let finite = [self.cx, self.cy]
            .iter()
            .chain(self.distortion.coefficients())
            .chain(self.translation.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(CameraError::InvalidProfile(format!("{}: non-finite parameter", self.name)));
        }
        Ok(())
    }

    pub fn intrinsic_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// World → camera rigid transform.
    pub fn extrinsics(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(self.translation),
            UnitQuaternion::from_rotation_matrix(&self.rotation),
        )
    }

    /// Camera center in world coordinates, `−Rᵀ·t`.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation.inverse() * self.translation))
    }

    pub fn world_to_camera(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn camera_to_world(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation.inverse() * (p.coords - self.translation))
    }

    /// Projects a point given in the camera's optical frame.
    pub fn project_camera(&self, p_cam: &Point3<f64>) -> Result<Point2<f64>, CameraError> {
        if !(p_cam.z > 0.0) {
            return Err(CameraError::BehindCamera(p_cam.z));
        }
        let d = self.distortion.distort(Vector2::new(p_cam.x / p_cam.z, p_cam.y / p_cam.z));
        Ok(Point2::new(self.fx * d.x + self.cx, self.fy * d.y + self.cy))
    }

    /// `p_cam = R·p + t`, distortion on the normalized coordinates, then `K`.
    pub fn project(&self, p_world: &Point3<f64>) -> Result<Point2<f64>, CameraError> {
        self.project_camera(&self.world_to_camera(p_world))
    }

    /// Normalized ray `(x, y, 1)` in the camera frame through `pixel`.
    pub fn undistort(&self, pixel: &Point2<f64>) -> Result<Vector3<f64>, CameraError> {
        let distorted = Vector2::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy);
        if !distorted.iter().all(|v| v.is_finite()) {
            return Err(CameraError::UndistortDiverged);
        }
        let n = self.distortion.undistort(distorted)?;
        Ok(Vector3::new(n.x, n.y, 1.0))
    }

    /// Pixel centers span `[-0.5, size - 0.5)` on each axis.
    pub fn contains(&self, pixel: &Point2<f64>) -> bool {
        pixel.x >= -0.5 && pixel.y >= -0.5 && pixel.x < self.width as f64 - 0.5 && pixel.y < self.height as f64 - 0.5
    }

    /// World-frame point where the back-projected ray of `pixel` meets `plane`.
    pub fn cast_ray_to_plane(&self, pixel: &Point2<f64>, plane: &Plane) -> Result<Point3<f64>, CameraError> {
        let ray_cam = self.undistort(pixel)?;
        let dir = self.rotation.inverse() * ray_cam;
        let origin = self.center();
        let n = plane.normal();
        let denom = n.dot(&dir);
        if denom.abs() <= 1e-9 * n.norm() * dir.norm() {
            return Err(CameraError::NoIntersection);
        }
        let s = -(n.dot(&origin.coords) + plane.d) / denom;
        if !(s > 0.0) {
            return Err(CameraError::BehindCamera(s));
        }
        Ok(origin + dir * s)
    }
}

/// Casts `pixel` from `from` onto `plane` and re-projects it into `to`.
pub fn transfer_pixel(
    pixel: &Point2<f64>,
    from: &CameraProfile,
    to: &CameraProfile,
    plane: &Plane,
) -> Result<TransferredPixel, CameraError> {
    let world = from.cast_ray_to_plane(pixel, plane)?;
    let out = to.project(&world)?;
    Ok(TransferredPixel {
        pixel: out,
        in_bounds: to.contains(&out),
    })
}
