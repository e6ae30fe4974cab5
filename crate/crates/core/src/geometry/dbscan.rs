use std::collections::{HashMap, VecDeque};

use nalgebra::Point3;

use super::{Cluster, GeometryError, PointCloud};

type CellKey = (i64, i64, i64);

/// Uniform voxel grid with cell size `eps`; an eps-ball touches at most the
/// 27 cells around the query point's cell.
struct Grid<'a> {
    points: &'a [Point3<f64>],
    eps: f64,
    cells: HashMap<CellKey, Vec<usize>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [Point3<f64>], eps: f64) -> Self {
        let mut cells: HashMap<CellKey, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        Self { points, eps, cells }
    }

    fn key(p: &Point3<f64>, eps: f64) -> CellKey {
        (
            (p.x / eps).floor() as i64,
            (p.y / eps).floor() as i64,
            (p.z / eps).floor() as i64,
        )
    }

    fn neighbors(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = &self.points[i];
        let (kx, ky, kz) = Self::key(p, self.eps);
        let eps2 = self.eps * self.eps;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(cell) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) {
                        out.extend(cell.iter().copied().filter(|&j| (self.points[j] - p).norm_squared() <= eps2));
                    }
                }
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Label {
    Unvisited,
    Noise,
    Member(usize),
}

/// DBSCAN over Euclidean distance.
///
/// A point is a core point when its closed eps-ball (itself included) holds at
/// least `min_points` points. Border points join the first cluster that reaches
/// them; clusters are numbered by their lowest-index core point and member
/// indices are sorted. Plane offsets are left unset.
pub fn cluster_points(cloud: &PointCloud, eps: f64, min_points: usize) -> Result<Vec<Cluster>, GeometryError> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(GeometryError::InvalidParameter("eps must be positive and finite"));
    }
    if min_points == 0 {
        return Err(GeometryError::InvalidParameter("min_points must be at least 1"));
    }
    let grid = Grid::new(&cloud.points, eps);
    let n = cloud.len();
    let mut labels = vec![Label::Unvisited; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut nbrs = Vec::new();
    let mut queue = VecDeque::new();

    for i in 0..n {
        if labels[i] != Label::Unvisited {
            continue;
        }
        grid.neighbors(i, &mut nbrs);
        if nbrs.len() < min_points {
            labels[i] = Label::Noise;
            continue;
        }
        let id = members.len();
        let mut cluster = vec![i];
        labels[i] = Label::Member(id);
        queue.extend(nbrs.iter().copied());
        while let Some(j) = queue.pop_front() {
            match labels[j] {
                Label::Member(_) => continue,
                Label::Noise => {
                    labels[j] = Label::Member(id);
                    cluster.push(j);
                    continue;
                }
                Label::Unvisited => {
                    labels[j] = Label::Member(id);
                    cluster.push(j);
                }
            }
            grid.neighbors(j, &mut nbrs);
            if nbrs.len() >= min_points {
                queue.extend(nbrs.iter().copied().filter(|&k| !matches!(labels[k], Label::Member(_))));
            }
        }
        cluster.sort_unstable();
        members.push(cluster);
    }

    members
        .into_iter()
        .map(|idx| Cluster::from_indices(idx, cloud))
        .collect()
}
