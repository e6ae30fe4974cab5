use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::CameraError;

const UNDISTORT_MAX_ITERS: usize = 100;
const UNDISTORT_TOL: f64 = 1e-15;

/// Distortion model tag as written in rig files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    BrownConrady,
    FisheyeEquidistant,
}

/// Lens distortion acting on normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distortion {
    /// Radial-tangential coefficients `[k1, k2, p1, p2, k3]`.
    BrownConrady([f64; 5]),
    /// Equidistant fisheye coefficients `[k1, k2, k3, k4]` on `θ = atan(r)`.
    FisheyeEquidistant([f64; 4]),
}

impl Default for Distortion {
    fn default() -> Self {
        Distortion::BrownConrady([0.0; 5])
    }
}

impl Distortion {
    pub fn kind(&self) -> DistortionKind {
        match self {
            Distortion::BrownConrady(_) => DistortionKind::BrownConrady,
            Distortion::FisheyeEquidistant(_) => DistortionKind::FisheyeEquidistant,
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        match self {
            Distortion::BrownConrady(k) => k,
            Distortion::FisheyeEquidistant(k) => k,
        }
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        match self {
            Distortion::BrownConrady(k) => k,
            Distortion::FisheyeEquidistant(k) => k,
        }
    }

    pub fn from_parts(kind: DistortionKind, coeffs: &[f64]) -> Result<Self, CameraError> {
        let bad = || CameraError::InvalidProfile(format!("{kind:?} expects a different number of coefficients, got {}", coeffs.len()));
        Ok(match kind {
            DistortionKind::BrownConrady => Distortion::BrownConrady(coeffs.try_into().map_err(|_| bad())?),
            DistortionKind::FisheyeEquidistant => Distortion::FisheyeEquidistant(coeffs.try_into().map_err(|_| bad())?),
        })
    }

    pub fn is_identity(&self) -> bool {
        self.coefficients().iter().all(|&k| k == 0.0)
    }

    pub fn distort(&self, p: Vector2<f64>) -> Vector2<f64> {
        match *self {
            Distortion::BrownConrady([k1, k2, p1, p2, k3]) => {
                let (x, y) = (p.x, p.y);
                let r2 = x * x + y * y;
                let radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
                Vector2::new(
                    x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x),
                    y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y,
                )
            }
            Distortion::FisheyeEquidistant(k) => {
                let r = p.norm();
                if r == 0.0 {
                    return p;
                }
                let theta = r.atan();
                p * (fisheye_poly(&k, theta) / r)
            }
        }
    }

    /// Jacobian of the Brown-Conrady map with respect to `(x, y)`.
    fn brown_jacobian(k: &[f64; 5], p: Vector2<f64>) -> Matrix2<f64> {
        let [k1, k2, p1, p2, k3] = *k;
        let (x, y) = (p.x, p.y);
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
        // d(radial)/d(r2)
        let dradial = k1 + r2 * (2.0 * k2 + 3.0 * k3 * r2);
        let dxx = radial + x * dradial * 2.0 * x + 2.0 * p1 * y + 6.0 * p2 * x;
        let dxy = x * dradial * 2.0 * y + 2.0 * p1 * x + 2.0 * p2 * y;
        let dyx = y * dradial * 2.0 * x + 2.0 * p1 * x + 2.0 * p2 * y;
        let dyy = radial + y * dradial * 2.0 * y + 6.0 * p1 * y + 2.0 * p2 * x;
        Matrix2::new(dxx, dxy, dyx, dyy)
    }

    /// Inverts [`Distortion::distort`] with Newton iterations.
    pub fn undistort(&self, target: Vector2<f64>) -> Result<Vector2<f64>, CameraError> {
        match self {
            _ if self.is_identity() => Ok(target),
            Distortion::BrownConrady(k) => {
                let mut p = target;
                for _ in 0..UNDISTORT_MAX_ITERS {
                    let residual = self.distort(p) - target;
                    if residual.norm() <= UNDISTORT_TOL * (1.0 + target.norm()) {
                        return Ok(p);
                    }
                    let j = Self::brown_jacobian(k, p);
                    let step = j.lu().solve(&residual).ok_or(CameraError::UndistortDiverged)?;
                    p -= step;
                    if !p.iter().all(|v| v.is_finite()) {
                        return Err(CameraError::UndistortDiverged);
                    }
                }
                let residual = self.distort(p) - target;
                if residual.norm() <= 1e-12 * (1.0 + target.norm()) {
                    Ok(p)
                } else {
                    Err(CameraError::UndistortDiverged)
                }
            }
            Distortion::FisheyeEquidistant(k) => {
                let theta_d = target.norm();
                if theta_d == 0.0 {
                    return Ok(target);
                }
                let mut theta = theta_d;
                let mut converged = false;
                for _ in 0..UNDISTORT_MAX_ITERS {
                    let f = fisheye_poly(k, theta) - theta_d;
                    if f.abs() <= UNDISTORT_TOL * (1.0 + theta_d) {
                        converged = true;
                        break;
                    }
                    let df = fisheye_poly_derivative(k, theta);
                    if df == 0.0 {
                        break;
                    }
                    theta -= f / df;
                }
                if !converged || !(0.0..std::f64::consts::FRAC_PI_2).contains(&theta) {
                    return Err(CameraError::UndistortDiverged);
                }
                Ok(target * (theta.tan() / theta_d))
            }
        }
    }
}

fn fisheye_poly(k: &[f64; 4], theta: f64) -> f64 {
    let t2 = theta * theta;
    theta * (1.0 + t2 * (k[0] + t2 * (k[1] + t2 * (k[2] + t2 * k[3]))))
}

fn fisheye_poly_derivative(k: &[f64; 4], theta: f64) -> f64 {
    let t2 = theta * theta;
    1.0 + t2 * (3.0 * k[0] + t2 * (5.0 * k[1] + t2 * (7.0 * k[2] + t2 * 9.0 * k[3])))
}
