//! Moving glass labels between calibrated views through the table plane.

use nalgebra::{Point2, Point3, Vector3};

use super::{Annotation, BBox, GlassClassSpec, KEYPOINT_CATEGORY_ID};
use crate::camera::{transfer_pixel, CameraError, CameraProfile};
use crate::geometry::Plane;

const RIM_SAMPLES: usize = 360;

/// Image bounds of an upright cylinder with the class's height and diameter
/// standing on `table` with its axis through `base`.
pub fn glass_silhouette_bbox(
    class: &GlassClassSpec,
    base: &Point3<f64>,
    table: &Plane,
    cam: &CameraProfile,
) -> Result<BBox, CameraError> {
    let n = table.canonicalized().unit_normal();
    let u = n.cross(&least_aligned_axis(&n)).normalize();
    let v = n.cross(&u);
    let r = class.diameter / 2.0;
    let mut pixels = Vec::with_capacity(2 * RIM_SAMPLES);
    for lift in [0.0, class.height] {
        for k in 0..RIM_SAMPLES {
            let a = k as f64 / RIM_SAMPLES as f64 * std::f64::consts::TAU;
            let p = base + n * lift + (u * a.cos() + v * a.sin()) * r;
            pixels.push(cam.project(&p)?);
        }
    }
    Ok(BBox::enclosing(&pixels).expect("rim samples"))
}

fn least_aligned_axis(n: &Vector3<f64>) -> Vector3<f64> {
    let a = n.abs();
    if a.x <= a.y && a.x <= a.z {
        Vector3::x()
    } else if a.y <= a.z {
        Vector3::y()
    } else {
        Vector3::z()
    }
}

/// Shifts a table point on the camera-facing side of a glass by `radius`
/// away from the camera, along the table, onto the glass axis.
pub fn axis_base_from_hull_point(hull_point: &Point3<f64>, radius: f64, cam: &CameraProfile, table: &Plane) -> Point3<f64> {
    let n = table.canonicalized().unit_normal();
    let cam_center = cam.center();
    let footprint = cam_center - n * table.canonicalized().signed_distance(&cam_center);
    let d = hull_point - footprint;
    let along = d - n * n.dot(&d);
    let norm = along.norm();
    if norm <= f64::EPSILON {
        return *hull_point;
    }
    hull_point + along / norm * radius
}

/// Outcome of [`project_annotations`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProjectionReport {
    pub transferred: usize,
    /// `(input index, reason)` for every annotation that was not transferred.
    pub dropped: Vec<(usize, String)>,
}

/// Re-creates glass annotations in `to`: the base point is cast onto the
/// table from `from` and the box is rebuilt from the class cylinder. Masks
/// do not transfer. Keypoint boxes keep their size around the moved center.
/// Boxes partially outside the target are clipped and flagged.
pub fn project_annotations(
    annotations: &[Annotation],
    from: &CameraProfile,
    to: &CameraProfile,
    table: &Plane,
    classes: &[GlassClassSpec],
) -> (Vec<Annotation>, ProjectionReport) {
    let mut out = Vec::new();
    let mut report = ProjectionReport::default();
    for (i, ann) in annotations.iter().enumerate() {
        match project_one(ann, from, to, table, classes) {
            Ok(a) => {
                out.push(a);
                report.transferred += 1;
            }
            Err(reason) => report.dropped.push((i, reason)),
        }
    }
    (out, report)
}

fn project_one(
    ann: &Annotation,
    from: &CameraProfile,
    to: &CameraProfile,
    table: &Plane,
    classes: &[GlassClassSpec],
) -> Result<Annotation, String> {
    let mut moved = ann.clone();
    moved.camera = to.name.clone();
    moved.mask = None;
    if ann.class_id == KEYPOINT_CATEGORY_ID {
        let center = ann
            .base_point
            .unwrap_or_else(|| Point2::new(ann.bbox.x + ann.bbox.w / 2.0, ann.bbox.y + ann.bbox.h / 2.0));
        let t = transfer_pixel(&center, from, to, table).map_err(|e| e.to_string())?;
        if !t.in_bounds {
            return Err(format!("keypoint lands outside {} at ({:.1}, {:.1})", to.name, t.pixel.x, t.pixel.y));
        }
        moved.bbox = BBox::new(
            t.pixel.x.round() - (ann.bbox.w / 2.0).floor(),
            t.pixel.y.round() - (ann.bbox.h / 2.0).floor(),
            ann.bbox.w,
            ann.bbox.h,
        );
        moved.base_point = Some(t.pixel);
        moved.clipped = moved.bbox.x < 0.0
            || moved.bbox.y < 0.0
            || moved.bbox.right() > to.width as f64
            || moved.bbox.bottom() > to.height as f64;
        return Ok(moved);
    }
    let class = classes
        .iter()
        .find(|c| c.id == ann.class_id)
        .ok_or_else(|| format!("unknown class id {}", ann.class_id))?;
    let base = match ann.base_point {
        Some(px) => from.cast_ray_to_plane(&px, table).map_err(|e| e.to_string())?,
        None => {
            let hull = from.cast_ray_to_plane(&ann.bbox.bottom_center(), table).map_err(|e| e.to_string())?;
            axis_base_from_hull_point(&hull, class.diameter / 2.0, from, table)
        }
    };
    let base_px = to.project(&base).map_err(|e| e.to_string())?;
    let full = glass_silhouette_bbox(class, &base, table, to).map_err(|e| e.to_string())?;
    let x0 = full.x.max(0.0);
    let y0 = full.y.max(0.0);
    let x1 = full.right().min(to.width as f64);
    let y1 = full.bottom().min(to.height as f64);
    if x1 <= x0 || y1 <= y0 {
        return Err(format!("glass outside the view of {}", to.name));
    }
    moved.bbox = BBox::new(x0, y0, x1 - x0, y1 - y0);
    moved.clipped = moved.bbox != full;
    moved.base_point = Some(base_px);
    Ok(moved)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Plane {
        Plane::new(0.0, 0.0, 1.0, 0.0).unwrap()
    }

    fn cam(name: &str, eye: Point3<f64>) -> CameraProfile {
        CameraProfile::pinhole(name, 800.0, 800.0, 640.0, 360.0, 1280, 720).looking_at(
            eye,
            Point3::new(0.5, 0.0, 0.0),
            Vector3::z(),
        )
    }

    fn water() -> GlassClassSpec {
        GlassClassSpec::new(4, "water glass", 0.12, 0.075)
    }

    fn model_annotation(cam: &CameraProfile, base: Point3<f64>) -> Annotation {
        let mut a = Annotation::new(4, glass_silhouette_bbox(&water(), &base, &table(), cam).unwrap(), cam.name.clone());
        a.base_point = Some(cam.project(&base).unwrap());
        a
    }

    #[test]
    fn silhouette_of_nadir_view_is_symmetric() {
        let c = CameraProfile::pinhole("n", 1000.0, 1000.0, 500.0, 500.0, 1000, 1000).looking_at(
            Point3::new(0.0, 0.0, 1.0),
            Point3::origin(),
            Vector3::y(),
        );
        let b = glass_silhouette_bbox(&water(), &Point3::origin(), &table(), &c).unwrap();
        // the top rim is the larger circle: radius 0.0375 at depth 0.88
        let r = 1000.0 * 0.0375 / 0.88;
        assert!((b.w - 2.0 * r).abs() < 1e-6 && (b.h - 2.0 * r).abs() < 1e-6);
        assert!((b.x + b.w / 2.0 - 500.0).abs() < 1e-9);
    }

    #[test]
    fn hull_point_moves_away_from_camera() {
        let c = cam("a", Point3::new(0.0, 0.0, 1.0));
        let p = axis_base_from_hull_point(&Point3::new(0.5, 0.0, 0.0), 0.04, &c, &table());
        assert!((p - Point3::new(0.54, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn self_projection_keeps_bottom_center() {
        let c = cam("a", Point3::new(0.0, -0.2, 1.0));
        let a = model_annotation(&c, Point3::new(0.5, 0.05, 0.0));
        let (out, rep) = project_annotations(&[a.clone()], &c, &c, &table(), &[water()]);
        assert_eq!(rep.transferred, 1);
        assert!((out[0].bbox.bottom_center() - a.bbox.bottom_center()).norm() < 1.0);
        assert!(out[0].mask.is_none());
    }

    #[test]
    fn transfer_matches_analytic_box() {
        let a_cam = cam("a", Point3::new(0.0, -0.3, 1.0));
        let b_cam = cam("b", Point3::new(0.1, 0.4, 0.9));
        let base = Point3::new(0.45, -0.05, 0.0);
        let ann = model_annotation(&a_cam, base);
        let (out, _) = project_annotations(&[ann], &a_cam, &b_cam, &table(), &[water()]);
        let truth = glass_silhouette_bbox(&water(), &base, &table(), &b_cam).unwrap();
        let got = out[0].bbox;
        for (g, t) in got.as_array().iter().zip(truth.as_array()) {
            assert!((g - t).abs() < 2.0, "{got:?} vs {truth:?}");
        }
        assert_eq!(out[0].camera, "b");
    }

    #[test]
    fn out_of_view_glass_is_dropped() {
        let a_cam = cam("a", Point3::new(0.0, -0.3, 1.0));
        let narrow = CameraProfile::pinhole("b", 800.0, 800.0, 640.0, 360.0, 1280, 720).looking_at(
            Point3::new(3.0, 3.0, 1.0),
            Point3::new(4.0, 4.0, 0.0),
            Vector3::z(),
        );
        let ann = model_annotation(&a_cam, Point3::new(0.5, 0.0, 0.0));
        let (out, rep) = project_annotations(&[ann], &a_cam, &narrow, &table(), &[water()]);
        assert!(out.is_empty());
        assert_eq!(rep.dropped.len(), 1);
    }

    #[test]
    fn missing_base_point_uses_bbox_bottom() {
        let c = cam("a", Point3::new(0.0, 0.0, 1.0));
        let base = Point3::new(0.5, 0.0, 0.0);
        let mut ann = model_annotation(&c, base);
        ann.base_point = None;
        let (out, _) = project_annotations(&[ann], &c, &c, &table(), &[water()]);
        let recovered = c.cast_ray_to_plane(&out[0].base_point.unwrap(), &table()).unwrap();
        // the silhouette bottom sits on the near rim, one radius from the axis
        assert!((recovered - base).norm() < 0.005, "{recovered:?}");
    }
}
