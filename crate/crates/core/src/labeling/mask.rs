use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::LabelError;

/// Axis-aligned box `(x, y, w, h)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// Tight box around a non-empty point set (continuous coordinates).
    pub fn enclosing<'a>(points: impl IntoIterator<Item = &'a Point2<f64>>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (first.x, first.y, first.x, first.y);
        for p in it {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        Some(Self::new(x0, y0, x1 - x0, y1 - y0))
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn bottom_center(&self) -> Point2<f64> {
        Point2::new(self.x + self.w / 2.0, self.y + self.h)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let iw = (self.right().min(other.right()) - self.x.max(other.x)).max(0.0);
        let ih = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

/// Binary image mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    bits: Vec<bool>,
}

/// Column-major run lengths starting with a (possibly empty) run of zeros,
/// as used by COCO's uncompressed RLE.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    /// `[height, width]`.
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Iterates the `(x, y)` of every set pixel in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }

    pub fn to_rle(&self) -> Rle {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for x in 0..self.width {
            for y in 0..self.height {
                if self.get(x, y) != current {
                    counts.push(run);
                    run = 0;
                    current = !current;
                }
                run += 1;
            }
        }
        counts.push(run);
        Rle {
            size: [self.height, self.width],
            counts,
        }
    }

    pub fn from_rle(rle: &Rle) -> Result<Self, LabelError> {
        let [height, width] = rle.size;
        let total = width as u64 * height as u64;
        let sum: u64 = rle.counts.iter().map(|&c| c as u64).sum();
        if sum != total {
            return Err(LabelError::InvalidRle(format!("run lengths sum to {sum}, mask has {total} pixels")));
        }
        let mut mask = Mask::new(width, height);
        let mut pos = 0u64;
        let mut value = false;
        for &c in &rle.counts {
            if value {
                for k in pos..pos + c as u64 {
                    let (x, y) = ((k / height as u64) as u32, (k % height as u64) as u32);
                    mask.set(x, y, true);
                }
            }
            pos += c as u64;
            value = !value;
        }
        Ok(mask)
    }
}

impl Rle {
    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }
}

/// Tight integer bounds of the set pixels: `x, y` is the top-left set pixel
/// coordinate and `w, h ≥ 1`.
pub fn mask_to_bbox(mask: &Mask) -> Result<BBox, LabelError> {
    let mut bounds: Option<(u32, u32, u32, u32)> = None;
    for (x, y) in mask.pixels() {
        bounds = Some(match bounds {
            None => (x, y, x, y),
            Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        });
    }
    let (x0, y0, x1, y1) = bounds.ok_or(LabelError::EmptyMask)?;
    Ok(BBox::new(
        x0 as f64,
        y0 as f64,
        (x1 - x0 + 1) as f64,
        (y1 - y0 + 1) as f64,
    ))
}

/// Andrew's monotone chain; returns the hull counter-clockwise without
/// repeating the first vertex. Collinear points are dropped.
pub fn convex_hull(points: &[Point2<f64>]) -> Vec<Point2<f64>> {
    let mut pts: Vec<Point2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut hull: Vec<Point2<f64>> = Vec::with_capacity(2 * pts.len());
    for p in &pts {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    let lower_len = hull.len() + 1;
    for p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    // fully collinear input collapses to its two extremes
    if hull.len() < 3 {
        let first = pts[0];
        let last = pts[pts.len() - 1];
        return vec![first, last];
    }
    hull
}

/// Rasterizes the filled convex hull of `points`: a pixel is set when its
/// center lies inside or on the hull. Degenerate hulls (a point or a segment)
/// set the pixels the segment passes through.
pub fn fill_convex_hull(points: &[Point2<f64>], width: u32, height: u32) -> Mask {
    let mut mask = Mask::new(width, height);
    let hull = convex_hull(points);
    match hull.len() {
        0 => {}
        1 | 2 => {
            let a = hull[0];
            let b = *hull.last().unwrap();
            let steps = ((b - a).norm().ceil() as usize).max(1) * 2;
            for s in 0..=steps {
                let p = a + (b - a) * (s as f64 / steps as f64);
                let (x, y) = (p.x.round(), p.y.round());
                if x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64 {
                    mask.set(x as u32, y as u32, true);
                }
            }
        }
        _ => {
            let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
            for p in &hull {
                y0 = y0.min(p.y);
                y1 = y1.max(p.y);
            }
            let row_start = y0.ceil().max(0.0) as i64;
            let row_end = (y1.floor() as i64).min(height as i64 - 1);
            for row in row_start..=row_end {
                let yc = row as f64;
                let (mut xl, mut xr) = (f64::INFINITY, f64::NEG_INFINITY);
                for i in 0..hull.len() {
                    let a = hull[i];
                    let b = hull[(i + 1) % hull.len()];
                    if (a.y - yc) * (b.y - yc) > 0.0 {
                        continue;
                    }
                    if a.y == b.y {
                        xl = xl.min(a.x.min(b.x));
                        xr = xr.max(a.x.max(b.x));
                    } else {
                        let x = a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y);
                        xl = xl.min(x);
                        xr = xr.max(x);
                    }
                }
                if xl > xr {
                    continue;
                }
                // tolerate rounding on edges that pass exactly through pixel centers
                let c0 = (xl - 1e-9).ceil().max(0.0) as i64;
                let c1 = ((xr + 1e-9).floor() as i64).min(width as i64 - 1);
                for col in c0..=c1 {
                    mask.set(col as u32, row as u32, true);
                }
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bbox_of_single_pixel() {
        let mut m = Mask::new(20, 20);
        m.set(5, 7, true);
        assert_eq!(mask_to_bbox(&m).unwrap(), BBox::new(5.0, 7.0, 1.0, 1.0));
    }

    #[test]
    fn bbox_of_rectangle() {
        let m = Mask::from_fn(20, 10, |x, y| (3..=9).contains(&x) && (2..=4).contains(&y));
        assert_eq!(mask_to_bbox(&m).unwrap(), BBox::new(3.0, 2.0, 7.0, 3.0));
    }

    #[test]
    fn bbox_of_l_shape_matches_scan() {
        let m = Mask::from_fn(30, 30, |x, y| (x == 4 && (2..20).contains(&y)) || (y == 19 && (4..15).contains(&x)));
        // oracle: independent min/max scan over the raw grid
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for y in 0..30 {
            for x in 0..30 {
                if m.get(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        let expected = BBox::new(x0 as f64, y0 as f64, (x1 - x0 + 1) as f64, (y1 - y0 + 1) as f64);
        assert_eq!(mask_to_bbox(&m).unwrap(), expected);
        assert_eq!(expected, BBox::new(4.0, 2.0, 11.0, 18.0));
    }

    #[test]
    fn empty_mask_rejected() {
        assert!(matches!(mask_to_bbox(&Mask::new(4, 4)), Err(LabelError::EmptyMask)));
    }

    #[test]
    fn rle_is_column_major_and_starts_with_zeros() {
        let mut m = Mask::new(3, 2);
        m.set(0, 0, true);
        m.set(1, 1, true);
        // column-major: (0,0)=1 (0,1)=0 (1,0)=0 (1,1)=1 (2,0)=0 (2,1)=0
        assert_eq!(m.to_rle().counts, vec![0, 1, 2, 1, 2]);
        assert_eq!(m.to_rle().size, [2, 3]);
        assert_eq!(m.to_rle().area(), 2);
    }

    #[test]
    fn rle_length_mismatch_rejected() {
        let rle = Rle {
            size: [2, 2],
            counts: vec![1, 1],
        };
        assert!(matches!(Mask::from_rle(&rle), Err(LabelError::InvalidRle(_))));
    }

    #[test]
    fn hull_fill_of_square() {
        let pts = [
            Point2::new(2.0, 2.0),
            Point2::new(6.0, 2.0),
            Point2::new(6.0, 5.0),
            Point2::new(2.0, 5.0),
            Point2::new(4.0, 3.0),
        ];
        let m = fill_convex_hull(&pts, 10, 10);
        assert_eq!(m.count(), 5 * 4);
        assert_eq!(mask_to_bbox(&m).unwrap(), BBox::new(2.0, 2.0, 5.0, 4.0));
    }

    #[test]
    fn hull_fill_single_point() {
        let m = fill_convex_hull(&[Point2::new(3.0, 4.0)], 10, 10);
        assert_eq!(m.count(), 1);
        assert!(m.get(3, 4));
    }

    #[test]
    fn iou_basics() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&BBox::new(20.0, 20.0, 5.0, 5.0)), 0.0);
        assert!((a.iou(&BBox::new(5.0, 0.0, 10.0, 10.0)) - 50.0 / 150.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn rle_round_trip(w in 1u32..12, h in 1u32..12, seed in any::<u64>()) {
            let m = Mask::from_fn(w, h, |x, y| (seed >> ((x * 7 + y * 3) % 64)) & 1 == 1);
            let rle = m.to_rle();
            prop_assert_eq!(rle.counts.iter().map(|&c| c as u64).sum::<u64>(), (w * h) as u64);
            prop_assert_eq!(Mask::from_rle(&rle).unwrap(), m.clone());
            prop_assert_eq!(rle.area() as usize, m.count());
        }

        #[test]
        fn hull_fill_contains_every_lattice_input(pts in proptest::collection::vec((0u32..40, 0u32..40), 1..30)) {
            let points: Vec<Point2<f64>> = pts.iter().map(|&(x, y)| Point2::new(x as f64, y as f64)).collect();
            let m = fill_convex_hull(&points, 40, 40);
            for &(x, y) in &pts {
                prop_assert!(m.get(x, y));
            }
        }
    }
}
