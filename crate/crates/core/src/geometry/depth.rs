use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::{GeometryError, PointCloud};
use crate::camera::CameraProfile;

/// Row-major depth image in millimeters; `0` marks a missing measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthFrame {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<u16>,
}

impl DepthFrame {
    pub fn new(width: u32, height: u32, depth: Vec<u16>) -> Result<Self, GeometryError> {
        let expected = width as usize * height as usize;
        if depth.len() != expected {
            return Err(GeometryError::GridLength {
                expected,
                actual: depth.len(),
            });
        }
        Ok(Self { width, height, depth })
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            depth: vec![0; width as usize * height as usize],
        }
    }

    pub fn get(&self, u: u32, v: u32) -> u16 {
        self.depth[v as usize * self.width as usize + u as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, mm: u16) {
        self.depth[v as usize * self.width as usize + u as usize] = mm;
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|&&d| d != 0).count()
    }
}

/// Back-projects every valid depth pixel into the camera's optical frame.
///
/// Each pixel center is undistorted to a normalized ray `(x, y, 1)` which is
/// scaled by the metric depth. Pixels whose ray cannot be undistorted are
/// skipped like missing depth. The cloud keeps row-major pixel order.
pub fn deproject_depth(frame: &DepthFrame, cam: &CameraProfile) -> Result<PointCloud, GeometryError> {
    deproject_depth_indexed(frame, cam).map(|(cloud, _)| cloud)
}

/// Like [`deproject_depth`], also returning the `(u, v)` pixel of every point.
pub fn deproject_depth_indexed(
    frame: &DepthFrame,
    cam: &CameraProfile,
) -> Result<(PointCloud, Vec<(u32, u32)>), GeometryError> {
    if frame.width != cam.width || frame.height != cam.height {
        return Err(GeometryError::DimensionMismatch {
            frame_w: frame.width,
            frame_h: frame.height,
            cam_w: cam.width,
            cam_h: cam.height,
        });
    }
    if frame.depth.len() != frame.width as usize * frame.height as usize {
        return Err(GeometryError::GridLength {
            expected: frame.width as usize * frame.height as usize,
            actual: frame.depth.len(),
        });
    }
    if !(cam.fx > 0.0 && cam.fy > 0.0) {
        return Err(GeometryError::InvalidParameter("focal lengths must be positive"));
    }
    let mut points = Vec::with_capacity(frame.valid_count());
    let mut pixels = Vec::with_capacity(points.capacity());
    for v in 0..frame.height {
        for u in 0..frame.width {
            let mm = frame.get(u, v);
            if mm == 0 {
                continue;
            }
            let Ok(ray) = cam.undistort(&nalgebra::Point2::new(u as f64, v as f64)) else {
                continue;
            };
            let z = mm as f64 / 1000.0;
            points.push(Point3::new(ray.x * z, ray.y * z, z));
            pixels.push((u, v));
        }
    }
    Ok((
        PointCloud {
            points,
            frame: cam.name.clone(),
        },
        pixels,
    ))
}
