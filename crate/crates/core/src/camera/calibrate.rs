use nalgebra::{DMatrix, DVector, Point2, Point3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::{CameraError, CameraProfile};

/// A calibration marker observed at `pixel` with known world position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub pixel: Point2<f64>,
    pub world: Point3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationOptions {
    /// Keep `K` and distortion fixed, refine only the pose.
    pub fix_intrinsics: bool,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    pub max_iterations: usize,
    /// Stop once an accepted step changes the cost by less than this fraction.
    pub relative_tolerance: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            fix_intrinsics: false,
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 0.1,
            max_iterations: 200,
            relative_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub profile: CameraProfile,
    pub rms: f64,
    pub iterations: usize,
    /// Cost (sum of squared pixel residuals) after the initial evaluation and
    /// after every accepted step.
    pub cost_trace: Vec<f64>,
}

const MIN_CORRESPONDENCES: usize = 6;

/// Root mean square of the per-point reprojection distances.
pub fn reprojection_rms(cam: &CameraProfile, correspondences: &[Correspondence]) -> Result<f64, CameraError> {
    if correspondences.is_empty() {
        return Err(CameraError::EmptyCorrespondences);
    }
    let mut sum = 0.0;
    for c in correspondences {
        sum += (cam.project(&c.world)? - c.pixel).norm_squared();
    }
    Ok((sum / correspondences.len() as f64).sqrt())
}

/// Parameter layout: `[fx, fy, cx, cy, dist…]` (unless fixed), then the
/// axis-angle rotation and the translation.
struct Packing {
    template: CameraProfile,
    fix_intrinsics: bool,
}

impl Packing {
    fn intrinsic_len(&self) -> usize {
        if self.fix_intrinsics {
            0
        } else {
            4 + self.template.distortion.coefficients().len()
        }
    }

    fn len(&self) -> usize {
        self.intrinsic_len() + 6
    }

    fn pack(&self, cam: &CameraProfile) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.len());
        if !self.fix_intrinsics {
            v.extend([cam.fx, cam.fy, cam.cx, cam.cy]);
            v.extend_from_slice(cam.distortion.coefficients());
        }
        // rotation as an increment on the template, well defined at any angle
        v.extend((cam.rotation * self.template.rotation.inverse()).scaled_axis().iter());
        v.extend(cam.translation.iter());
        DVector::from_vec(v)
    }

    fn unpack(&self, v: &DVector<f64>) -> CameraProfile {
        let mut cam = self.template.clone();
        let mut i = 0;
        if !self.fix_intrinsics {
            cam.fx = v[0];
            cam.fy = v[1];
            cam.cx = v[2];
            cam.cy = v[3];
            i = 4;
            for k in cam.distortion.coefficients_mut() {
                *k = v[i];
                i += 1;
            }
        }
        cam.rotation = Rotation3::from_scaled_axis(Vector3::new(v[i], v[i + 1], v[i + 2])) * self.template.rotation;
        cam.translation = Vector3::new(v[i + 3], v[i + 4], v[i + 5]);
        cam
    }
}

/// Residual vector `project(world_i) − pixel_i`, stacked `(du, dv)`.
/// Points behind the camera get a large finite penalty so the solver backs off.
fn residuals(cam: &CameraProfile, data: &[Correspondence]) -> DVector<f64> {
    const BEHIND_PENALTY: f64 = 1e6;
    let mut r = DVector::zeros(2 * data.len());
    for (i, c) in data.iter().enumerate() {
        match cam.project(&c.world) {
            Ok(px) if px.x.is_finite() && px.y.is_finite() => {
                r[2 * i] = px.x - c.pixel.x;
                r[2 * i + 1] = px.y - c.pixel.y;
            }
            _ => {
                r[2 * i] = BEHIND_PENALTY;
                r[2 * i + 1] = BEHIND_PENALTY;
            }
        }
    }
    r
}

/// Central-difference Jacobian of [`residuals`] with respect to the packed parameters.
fn jacobian(packing: &Packing, params: &DVector<f64>, data: &[Correspondence]) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * data.len(), params.len());
    let mut p = params.clone();
    for k in 0..params.len() {
        let h = 1e-6 * params[k].abs().max(1.0);
        p[k] = params[k] + h;
        let plus = residuals(&packing.unpack(&p), data);
        p[k] = params[k] - h;
        let minus = residuals(&packing.unpack(&p), data);
        p[k] = params[k];
        j.set_column(k, &((plus - minus) / (2.0 * h)));
    }
    j
}

/// Refines `init` by Levenberg-Marquardt on the squared reprojection error.
///
/// The damped normal equations use Marquardt's diagonal scaling. Steps are
/// only accepted when they lower the cost, so [`CalibrationResult::cost_trace`]
/// is non-increasing. The rotation lives on the manifold as an axis-angle
/// vector and is rebuilt as an orthonormal matrix after each update.
pub fn calibrate(
    correspondences: &[Correspondence],
    init: &CameraProfile,
    options: &CalibrationOptions,
) -> Result<CalibrationResult, CameraError> {
    if correspondences.len() < MIN_CORRESPONDENCES {
        return Err(CameraError::InsufficientCorrespondences {
            needed: MIN_CORRESPONDENCES,
            got: correspondences.len(),
        });
    }
    init.validate()?;
    if image_points_collinear(correspondences) {
        return Err(CameraError::RankDeficient);
    }
    let packing = Packing {
        template: init.clone(),
        fix_intrinsics: options.fix_intrinsics,
    };
    let mut params = packing.pack(init);
    let mut r = residuals(init, correspondences);
    let mut cost = r.norm_squared();
    let mut j = jacobian(&packing, &params, correspondences);
    if is_rank_deficient(&j) {
        return Err(CameraError::RankDeficient);
    }

    let mut lambda = options.initial_damping;
    let mut trace = vec![cost];
    let n = params.len();
    for iter in 1..=options.max_iterations {
        let jtj = j.transpose() * &j;
        let gradient = j.transpose() * &r;
        if cost == 0.0 || gradient.amax() <= f64::EPSILON * cost.max(f64::MIN_POSITIVE) {
            return finish(&packing, &params, correspondences, iter - 1, trace);
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&gradient)) else {
                lambda *= options.damping_up;
                continue;
            };
            let candidate = &params - step;
            let cand_r = residuals(&packing.unpack(&candidate), correspondences);
            let cand_cost = cand_r.norm_squared();
            if cand_cost.is_finite() && cand_cost < cost {
                let rel = (cost - cand_cost) / cost;
                params = candidate;
                r = cand_r;
                cost = cand_cost;
                trace.push(cost);
                lambda = (lambda * options.damping_down).max(1e-15);
                accepted = true;
                if rel < options.relative_tolerance {
                    return finish(&packing, &params, correspondences, iter, trace);
                }
                break;
            }
            lambda *= options.damping_up;
        }
        if !accepted {
            // no descent direction left at any damping: local minimum
            return finish(&packing, &params, correspondences, iter, trace);
        }
        j = jacobian(&packing, &params, correspondences);
    }
    let best = packing.unpack(&params);
    let best_rms = reprojection_rms(&best, correspondences).unwrap_or(f64::INFINITY);
    Err(CameraError::NonConvergence {
        iterations: options.max_iterations,
        best_rms,
        best: Box::new(best),
    })
}

fn finish(
    packing: &Packing,
    params: &DVector<f64>,
    data: &[Correspondence],
    iterations: usize,
    cost_trace: Vec<f64>,
) -> Result<CalibrationResult, CameraError> {
    let profile = packing.unpack(params);
    profile.validate()?;
    let rms = reprojection_rms(&profile, data)?;
    Ok(CalibrationResult {
        profile,
        rms,
        iterations,
        cost_trace,
    })
}

fn image_points_collinear(data: &[Correspondence]) -> bool {
    let n = data.len() as f64;
    let mean = data.iter().fold(nalgebra::Vector2::zeros(), |acc, c| acc + c.pixel.coords) / n;
    let mut cov = nalgebra::Matrix2::zeros();
    for c in data {
        let d = c.pixel.coords - mean;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    !(hi > 0.0) || lo <= 1e-10 * hi
}

/// Rank test on the column-normalized Jacobian.
fn is_rank_deficient(j: &DMatrix<f64>) -> bool {
    let mut scaled = j.clone();
    for mut col in scaled.column_iter_mut() {
        let norm = col.norm();
        if norm == 0.0 {
            return true;
        }
        col /= norm;
    }
    let sv = scaled.singular_values();
    let (lo, hi) = (sv.min(), sv.max());
    !(hi > 0.0) || lo <= 1e-9 * hi
}
