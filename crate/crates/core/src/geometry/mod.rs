//! 3D substrate of the labeling pipeline: depth de-projection, table plane
//! fitting, density clustering and plane-relative measurements.

mod dbscan;
mod depth;
mod plane;
mod ransac;

pub use dbscan::cluster_points;
pub use depth::{deproject_depth, deproject_depth_indexed, DepthFrame};
pub use plane::{cluster_height, cluster_plane_offset, project_point_to_plane, Plane};
pub use ransac::{fit_plane_ransac, PlaneFit, RansacConfig};

use nalgebra::{Isometry3, Point3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by the geometric primitives.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("plane normal has zero length")]
    ZeroNormal,
    #[error("plane fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("every RANSAC sample was degenerate (collinear or coincident points)")]
    DegenerateSamples,
    #[error("cluster has no points")]
    EmptyCluster,
    #[error("depth frame is {frame_w}x{frame_h} but camera sensor is {cam_w}x{cam_h}")]
    DimensionMismatch {
        frame_w: u32,
        frame_h: u32,
        cam_w: u32,
        cam_h: u32,
    },
    #[error("depth grid holds {actual} values, expected {expected}")]
    GridLength { expected: usize, actual: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("point cloud contains a non-finite coordinate at index {0}")]
    NonFinite(usize),
}

/// A set of 3D points in meters, tagged with the frame they are expressed in.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    /// `"world"` or the name of the camera whose optical frame holds the points.
    pub frame: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>, frame: impl Into<String>) -> Result<Self, GeometryError> {
        if let Some(i) = points.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFinite(i));
        }
        Ok(Self {
            points,
            frame: frame.into(),
        })
    }

    pub fn world(points: Vec<Point3<f64>>) -> Result<Self, GeometryError> {
        Self::new(points, "world")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Re-expresses every point through `transform`, retagging the frame.
    pub fn transformed(&self, transform: &Isometry3<f64>, frame: impl Into<String>) -> Self {
        Self {
            points: self.points.iter().map(|p| transform * p).collect(),
            frame: frame.into(),
        }
    }

    /// Copies out the points at `indices`, keeping the frame tag.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            frame: self.frame.clone(),
        }
    }
}

/// A density cluster referencing points of a [`PointCloud`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub indices: Vec<usize>,
    pub centroid: Point3<f64>,
    /// Offset `d'` of the plane parallel to the table through the cluster top.
    /// `None` until [`cluster_plane_offset`] has been applied.
    pub plane_offset: Option<f64>,
}

impl Cluster {
    /// Builds a cluster and its centroid from member indices.
    pub fn from_indices(indices: Vec<usize>, cloud: &PointCloud) -> Result<Self, GeometryError> {
        if indices.is_empty() {
            return Err(GeometryError::EmptyCluster);
        }
        let centroid = centroid(indices.iter().map(|&i| &cloud.points[i]));
        Ok(Self {
            indices,
            centroid,
            plane_offset: None,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Arithmetic mean of a non-empty point sequence.
pub(crate) fn centroid<'a>(points: impl IntoIterator<Item = &'a Point3<f64>>) -> Point3<f64> {
    let mut sum = nalgebra::Vector3::zeros();
    let mut n = 0usize;
    for p in points {
        sum += p.coords;
        n += 1;
    }
    Point3::from(sum / n.max(1) as f64)
}
