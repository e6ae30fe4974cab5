//! Glass base points and the Gaussian keypoint heatmap built from them.

use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraError, CameraProfile};
use crate::geometry::{project_point_to_plane, Plane};
use crate::labeling::{Annotation, BBox, KEYPOINT_CATEGORY_ID};

pub const DEFAULT_KERNEL_SIZE: u32 = 15;
pub const DEFAULT_SIGMA: f64 = DEFAULT_KERNEL_SIZE as f64 / 6.0;
pub const DEFAULT_KEYPOINT_BOX: u32 = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeatmapError {
    #[error("kernel size {0} must be odd and positive")]
    InvalidKernel(u32),
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("proposal score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("box size must be at least 1")]
    InvalidBoxSize,
    #[error("cap point set is empty")]
    EmptyCapSet,
    #[error("pixel ({0:.2}, {1:.2}) lies outside the image")]
    OutsideImage(f64, f64),
    #[error(transparent)]
    Camera(#[from] CameraError),
}

/// The table-contact point of one glass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasePoint {
    /// Cap centroid (m).
    pub p: Point3<f64>,
    /// Signed distance of `p` above the table (m).
    pub d_proj: f64,
    /// `p` dropped onto the table (m).
    pub p_proj: Point3<f64>,
    pub pixel: Point2<f64>,
}

impl BasePoint {
    /// Square of side `size` centered on the base pixel.
    pub fn keypoint_box(&self, size: u32) -> BBox {
        keypoint_box(&self.pixel, size)
    }
}

fn keypoint_box(pixel: &Point2<f64>, size: u32) -> BBox {
    let half = (size / 2) as f64;
    BBox::new(pixel.x.round() - half, pixel.y.round() - half, size as f64, size as f64)
}

/// Averages the cap points, drops the average onto the table and projects
/// the result into `cam`.
pub fn compute_base_point(cap_points: &[Point3<f64>], table: &Plane, cam: &CameraProfile) -> Result<BasePoint, HeatmapError> {
    if cap_points.is_empty() {
        return Err(HeatmapError::EmptyCapSet);
    }
    let p = crate::geometry::centroid(cap_points.iter());
    let (d_proj, p_proj) = project_point_to_plane(&p, &table.canonicalized());
    let pixel = cam.project(&p_proj)?;
    Ok(BasePoint { p, d_proj, p_proj, pixel })
}

/// Keypoint-class annotation: a `box_size` square centered on the rounded
/// pixel. Boxes crossing the image border are kept unclipped and flagged.
pub fn to_keypoint_annotation(pixel: &Point2<f64>, box_size: u32, cam: &CameraProfile) -> Result<Annotation, HeatmapError> {
    if box_size == 0 {
        return Err(HeatmapError::InvalidBoxSize);
    }
    if !cam.contains(pixel) {
        return Err(HeatmapError::OutsideImage(pixel.x, pixel.y));
    }
    let bbox = keypoint_box(pixel, box_size);
    let mut ann = Annotation::new(KEYPOINT_CATEGORY_ID, bbox, cam.name.clone());
    ann.base_point = Some(*pixel);
    ann.clipped = bbox.x < 0.0 || bbox.y < 0.0 || bbox.right() > cam.width as f64 || bbox.bottom() > cam.height as f64;
    Ok(ann)
}

/// A keypoint box center with the detector's confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeypointProposal {
    pub center: [f64; 2],
    pub score: f64,
}

impl KeypointProposal {
    pub fn new(x: f64, y: f64, score: f64) -> Self {
        Self { center: [x, y], score }
    }
}

/// Row-major non-negative grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Gaussian density at offset `(dx, dy)` from the center.
pub fn gaussian(dx: f64, dy: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    (-(dx * dx + dy * dy) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2)
}

/// Sums score-weighted Gaussians, each truncated to the `k × k` pixel window
/// around its rounded center. Proposals are accumulated in input order.
pub fn render_heatmap(
    proposals: &[KeypointProposal],
    width: u32,
    height: u32,
    k: u32,
    sigma: f64,
) -> Result<Heatmap, HeatmapError> {
    if k == 0 || k % 2 == 0 {
        return Err(HeatmapError::InvalidKernel(k));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(HeatmapError::InvalidSigma(sigma));
    }
    let mut map = Heatmap::zeros(width, height);
    let half = (k / 2) as i64;
    for prop in proposals {
        if !(0.0..=1.0).contains(&prop.score) {
            return Err(HeatmapError::InvalidScore(prop.score));
        }
        let [cx, cy] = prop.center;
        let (rx, ry) = (cx.round() as i64, cy.round() as i64);
        for y in (ry - half).max(0)..=(ry + half).min(height as i64 - 1) {
            for x in (rx - half).max(0)..=(rx + half).min(width as i64 - 1) {
                let g = gaussian(x as f64 - cx, y as f64 - cy, sigma);
                map.values[y as usize * width as usize + x as usize] += prop.score * g;
            }
        }
    }
    Ok(map)
}

/// Per box, the pixel with the highest value among those whose centers lie
/// inside the box. Ties go to the smallest row, then column; boxes whose
/// maximum is zero yield `None`.
pub fn extract_base_points(map: &Heatmap, boxes: &[BBox]) -> Vec<Option<Point2<f64>>> {
    boxes
        .iter()
        .map(|b| {
            let x0 = b.x.ceil().max(0.0) as i64;
            let y0 = b.y.ceil().max(0.0) as i64;
            let x1 = ((b.right().ceil() as i64) - 1).min(map.width as i64 - 1);
            let y1 = ((b.bottom().ceil() as i64) - 1).min(map.height as i64 - 1);
            let mut best: Option<(f64, i64, i64)> = None;
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let v = map.get(x as u32, y as u32);
                    if v > 0.0 && best.is_none_or(|(bv, _, _)| v > bv) {
                        best = Some((v, x, y));
                    }
                }
            }
            best.map(|(_, x, y)| Point2::new(x as f64, y as f64))
        })
        .collect()
}
