use nalgebra::{Matrix3, Point3, SymmetricEigen};
use rand::{seq::index, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{centroid, GeometryError, Plane, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    /// Maximum |signed distance| (m) for a point to count as an inlier.
    pub inlier_threshold: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Hypotheses are scored on a seeded subsample of at most this many
    /// points; the final inlier mask and refit always use the full cloud.
    pub max_scoring_points: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            inlier_threshold: 0.005,
            iterations: 500,
            seed: 0,
            max_scoring_points: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneFit {
    /// Canonical plane (unit normal, `c ≥ 0`).
    pub plane: Plane,
    pub inliers: Vec<bool>,
    pub inlier_count: usize,
}

/// Fits the dominant plane with 3-point RANSAC followed by a least-squares
/// refit over the consensus set. Bit-reproducible for a fixed seed.
pub fn fit_plane_ransac(cloud: &PointCloud, cfg: &RansacConfig) -> Result<PlaneFit, GeometryError> {
    let pts = &cloud.points;
    if pts.len() < 3 {
        return Err(GeometryError::TooFewPoints(pts.len()));
    }
    if !(cfg.inlier_threshold > 0.0) {
        return Err(GeometryError::InvalidParameter("inlier_threshold must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let scoring: Vec<usize> = if pts.len() > cfg.max_scoring_points.max(3) {
        let mut idx = index::sample(&mut rng, pts.len(), cfg.max_scoring_points.max(3)).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..pts.len()).collect()
    };

    let mut best: Option<(Plane, usize)> = None;
    for _ in 0..cfg.iterations {
        let s = index::sample(&mut rng, pts.len(), 3);
        let Some(candidate) = plane_through(&pts[s.index(0)], &pts[s.index(1)], &pts[s.index(2)]) else {
            continue;
        };
        let count = scoring
            .iter()
            .filter(|&&i| candidate.residual(&pts[i]).abs() <= cfg.inlier_threshold)
            .count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((candidate, count));
        }
    }
    let (hypothesis, _) = best.ok_or(GeometryError::DegenerateSamples)?;

    let consensus: Vec<Point3<f64>> = pts
        .iter()
        .filter(|p| hypothesis.residual(p).abs() <= cfg.inlier_threshold)
        .copied()
        .collect();
    let plane = least_squares_plane(&consensus).unwrap_or(hypothesis).canonicalized();

    let inliers: Vec<bool> = pts
        .iter()
        .map(|p| plane.residual(p).abs() <= cfg.inlier_threshold)
        .collect();
    let inlier_count = inliers.iter().filter(|&&b| b).count();
    Ok(PlaneFit {
        plane,
        inliers,
        inlier_count,
    })
}

/// Unit-normal plane through three points, `None` when they are (nearly) collinear.
fn plane_through(p0: &Point3<f64>, p1: &Point3<f64>, p2: &Point3<f64>) -> Option<Plane> {
    let e1 = p1 - p0;
    let e2 = p2 - p0;
    let n = e1.cross(&e2);
    let scale = e1.norm() * e2.norm();
    if !(scale > 0.0) || n.norm() <= 1e-12 * scale {
        return None;
    }
    let n = n.normalize();
    Plane::from_point_normal(p0, &n).ok()
}

/// Total least-squares plane: normal is the eigenvector of the scatter matrix
/// with the smallest eigenvalue.
pub(crate) fn least_squares_plane(points: &[Point3<f64>]) -> Option<Plane> {
    if points.len() < 3 {
        return None;
    }
    let c = centroid(points);
    let mut scatter = Matrix3::zeros();
    for p in points {
        let v = p - c;
        scatter += v * v.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let (k, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let n = eig.eigenvectors.column(k).into_owned();
    Plane::from_point_normal(&c, &n).ok()
}
