use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{Cluster, GeometryError, PointCloud};

/// Quantile of point-to-table distances taken as a cluster's top surface.
pub const TOP_SURFACE_QUANTILE: f64 = 0.95;

/// Plane `a·x + b·y + c·z + d = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Plane {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self, GeometryError> {
        let plane = Self { a, b, c, d };
        if !(plane.normal_norm() > 0.0) || !d.is_finite() {
            return Err(GeometryError::ZeroNormal);
        }
        Ok(plane)
    }

    /// Plane through `point` with the given normal.
    pub fn from_point_normal(point: &Point3<f64>, normal: &Vector3<f64>) -> Result<Self, GeometryError> {
        Self::new(normal.x, normal.y, normal.z, -normal.dot(&point.coords))
    }

    pub fn normal(&self) -> Vector3<f64> {
        Vector3::new(self.a, self.b, self.c)
    }

    pub fn normal_norm(&self) -> f64 {
        self.normal().norm()
    }

    pub fn unit_normal(&self) -> Vector3<f64> {
        self.normal() / self.normal_norm()
    }

    /// Scales to a unit normal and flips the sign so that `c ≥ 0`
    /// (ties on `c = 0` resolved by `b ≥ 0`, then `a > 0`).
    pub fn canonicalized(&self) -> Self {
        let norm = self.normal_norm();
        let flip = if self.c != 0.0 {
            self.c < 0.0
        } else if self.b != 0.0 {
            self.b < 0.0
        } else {
            self.a < 0.0
        };
        let s = if flip { -1.0 / norm } else { 1.0 / norm };
        Self {
            a: self.a * s,
            b: self.b * s,
            c: self.c * s,
            d: self.d * s,
        }
    }

    pub fn is_canonical(&self, tol: f64) -> bool {
        (self.normal_norm() - 1.0).abs() <= tol && self.c >= 0.0
    }

    /// `(a·x + b·y + c·z + d) / ‖n‖`.
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        (self.a * p.x + self.b * p.y + self.c * p.z + self.d) / self.normal_norm()
    }

    pub fn residual(&self, p: &Point3<f64>) -> f64 {
        self.a * p.x + self.b * p.y + self.c * p.z + self.d
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            a: self.a * lambda,
            b: self.b * lambda,
            c: self.c * lambda,
            d: self.d * lambda,
        }
    }
}

/// Signed distance of `p` to `plane` and its orthogonal projection onto it.
pub fn project_point_to_plane(p: &Point3<f64>, plane: &Plane) -> (f64, Point3<f64>) {
    let d_proj = plane.signed_distance(p);
    (d_proj, p - plane.unit_normal() * d_proj)
}

/// Height between two parallel planes sharing the table normal:
/// `|d' − d| / √(a² + b² + c²)`.
pub fn cluster_height(plane_offset: f64, table: &Plane) -> Result<f64, GeometryError> {
    let norm = table.normal_norm();
    if !(norm > 0.0) {
        return Err(GeometryError::ZeroNormal);
    }
    Ok((plane_offset - table.d).abs() / norm)
}

/// Offset `d'` of the plane parallel to `table` through the cluster's top surface.
///
/// The top surface sits at the 95th percentile (nearest rank) of the members'
/// absolute distance to the table, so isolated depth spikes do not inflate the
/// height. The side of the table is taken from the sign of the summed signed
/// distances, and `d'` shares the table's normalization.
pub fn cluster_plane_offset(cluster: &Cluster, cloud: &PointCloud, table: &Plane) -> Result<f64, GeometryError> {
    if cluster.indices.is_empty() {
        return Err(GeometryError::EmptyCluster);
    }
    let norm = table.normal_norm();
    if !(norm > 0.0) {
        return Err(GeometryError::ZeroNormal);
    }
    let signed: Vec<f64> = cluster
        .indices
        .iter()
        .map(|&i| table.signed_distance(&cloud.points[i]))
        .collect();
    let mut magnitudes: Vec<f64> = signed.iter().map(|s| s.abs()).collect();
    let top = nearest_rank_quantile(&mut magnitudes, TOP_SURFACE_QUANTILE);
    let side = if signed.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    Ok(table.d - side * top * norm)
}

/// Nearest-rank quantile; sorts `values` in place. `values` must be non-empty.
pub(crate) fn nearest_rank_quantile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let rank = (q * values.len() as f64).ceil() as usize;
    values[rank.clamp(1, values.len()) - 1]
}
