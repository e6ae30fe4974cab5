use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::{convex_hull, LabelError};
use crate::geometry::{cluster_height, cluster_plane_offset, cluster_points, Cluster, Plane, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CandidateConfig {
    /// Minimum height above the table (m) for a point to be an object point.
    pub deviation_threshold: f64,
    /// DBSCAN neighborhood radius (m).
    pub eps: f64,
    pub min_points: usize,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        Self {
            deviation_threshold: 0.005,
            eps: 0.02,
            min_points: 20,
        }
    }
}

/// An off-table cluster moving through the cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterCandidate {
    /// Member indices refer to the cloud the candidate was extracted from.
    pub cluster: Cluster,
    /// Height above the table (m).
    pub height: f64,
    pub class_id: Option<u32>,
    pub footprint_pixels: Vec<Point2<f64>>,
    pub color_ok: Option<bool>,
    pub verifier_ok: Option<bool>,
}

/// Clusters the points lying more than `cfg.deviation_threshold` above the
/// table and measures each cluster's height. The table is used in canonical
/// form, so "above" is the side its normal points to. Output is sorted by
/// centroid x, then y.
pub fn extract_candidates(
    cloud: &PointCloud,
    table: &Plane,
    cfg: &CandidateConfig,
) -> Result<Vec<ClusterCandidate>, LabelError> {
    let table = table.canonicalized();
    let off_plane: Vec<usize> = (0..cloud.len())
        .filter(|&i| table.signed_distance(&cloud.points[i]) > cfg.deviation_threshold)
        .collect();
    let subset = cloud.select(&off_plane);
    let mut out = Vec::new();
    for local in cluster_points(&subset, cfg.eps, cfg.min_points)? {
        let indices: Vec<usize> = local.indices.iter().map(|&i| off_plane[i]).collect();
        let mut cluster = Cluster::from_indices(indices, cloud)?;
        let offset = cluster_plane_offset(&cluster, cloud, &table)?;
        cluster.plane_offset = Some(offset);
        out.push(ClusterCandidate {
            height: cluster_height(offset, &table)?,
            cluster,
            class_id: None,
            footprint_pixels: Vec::new(),
            color_ok: None,
            verifier_ok: None,
        });
    }
    out.sort_by(|a, b| {
        a.cluster
            .centroid
            .x
            .total_cmp(&b.cluster.centroid.x)
            .then(a.cluster.centroid.y.total_cmp(&b.cluster.centroid.y))
    });
    Ok(out)
}

/// Indices (into `cloud`) of the highest `fraction` of the cluster's points,
/// at least one; these are the cap-top points of a capped glass.
pub fn cap_top_indices(cluster: &Cluster, cloud: &PointCloud, table: &Plane, fraction: f64) -> Vec<usize> {
    let table = table.canonicalized();
    let mut ranked: Vec<(f64, usize)> = cluster
        .indices
        .iter()
        .map(|&i| (table.signed_distance(&cloud.points[i]), i))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let keep = ((ranked.len() as f64 * fraction).ceil() as usize).clamp(1, ranked.len().max(1));
    let mut top: Vec<usize> = ranked.into_iter().take(keep).map(|(_, i)| i).collect();
    top.sort_unstable();
    top
}

/// Picks up to `max` well-spread points. Convex hull vertices are taken
/// first (themselves farthest-point thinned if there are more than `max`),
/// then remaining slots go to the point farthest from everything chosen.
/// Deterministic: ties resolve to the lowest input index.
pub fn farthest_point_sample(points: &[Point2<f64>], max: usize) -> Vec<Point2<f64>> {
    if points.len() <= max {
        return points.to_vec();
    }
    if max == 0 {
        return Vec::new();
    }
    let hull = convex_hull(points);
    let seeds = if hull.len() > max { greedy_spread(&hull, &[], max) } else { hull };
    let rest = max - seeds.len();
    let mut chosen = seeds.clone();
    chosen.extend(greedy_spread(points, &seeds, rest));
    chosen
}

fn greedy_spread(points: &[Point2<f64>], seeds: &[Point2<f64>], count: usize) -> Vec<Point2<f64>> {
    let mut out = Vec::with_capacity(count);
    if count == 0 || points.is_empty() {
        return out;
    }
    let mut dist: Vec<f64> = points
        .iter()
        .map(|p| seeds.iter().map(|s| (p - s).norm_squared()).fold(f64::INFINITY, f64::min))
        .collect();
    if seeds.is_empty() {
        // start from the point farthest from the centroid
        let c = points.iter().fold(nalgebra::Vector2::zeros(), |acc, p| acc + p.coords) / points.len() as f64;
        dist = points.iter().map(|p| (p.coords - c).norm_squared()).collect();
    }
    for _ in 0..count.min(points.len()) {
        let (k, &d) = dist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty");
        if d == 0.0 && !out.is_empty() {
            break;
        }
        let pick = points[k];
        out.push(pick);
        for (dk, p) in dist.iter_mut().zip(points) {
            *dk = dk.min((p - pick).norm_squared());
        }
    }
    out
}
