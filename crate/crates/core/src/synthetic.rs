//! Ray-cast tabletop scenes with known geometry, used as ground truth.
//!
//! The world frame has the table at `z = 0` with `+z` up and the robot
//! looking along `+x`. Objects are upright cylinders.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use nalgebra::{Point2, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraProfile, Distortion, Rig};
use crate::dataset::{write_depth_png, Pass, HEAD_CAMERAS, HEAD_POSES, RGBD_CAMERAS, STATIC_CAMERAS};
use crate::geometry::{DepthFrame, Plane};
use crate::labeling::{BBox, GlassClassSpec};

pub const HEAD_HEIGHT: f64 = 1.2;
pub const CAP_THICKNESS: f64 = 0.01;

const TABLE_RGB: [u8; 3] = [140, 110, 80];
const CAP_RGB: [u8; 3] = [40, 170, 70];
const GLASS_CAPPED_RGB: [u8; 3] = [185, 192, 196];
const CHALK_RGB: [u8; 3] = [236, 236, 230];
const BOTTLE_RGB: [u8; 3] = [70, 50, 30];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ObjectKind {
    Glass { class_id: u32 },
    /// Opaque, taller than any glass; never labeled.
    Bottle,
    /// Glass-sized, entirely green, not glass-like.
    GreenDecoy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    #[serde(flatten)]
    pub kind: ObjectKind,
    /// Axis position on the table (m).
    pub center: [f64; 2],
    pub radius: f64,
    pub height: f64,
}

impl SceneObject {
    pub fn glass(class: &GlassClassSpec, x: f64, y: f64) -> Self {
        Self {
            kind: ObjectKind::Glass { class_id: class.id },
            center: [x, y],
            radius: class.diameter / 2.0,
            height: class.height,
        }
    }

    pub fn bottle(x: f64, y: f64) -> Self {
        Self {
            kind: ObjectKind::Bottle,
            center: [x, y],
            radius: 0.04,
            height: 0.30,
        }
    }

    pub fn decoy(x: f64, y: f64, height: f64) -> Self {
        Self {
            kind: ObjectKind::GreenDecoy,
            center: [x, y],
            radius: 0.04,
            height,
        }
    }

    pub fn class_id(&self) -> Option<u32> {
        match self.kind {
            ObjectKind::Glass { class_id } => Some(class_id),
            _ => None,
        }
    }

    pub fn base(&self) -> Point3<f64> {
        Point3::new(self.center[0], self.center[1], 0.0)
    }

    /// Ray parameter of the first hit, with the hit lying on the top disc
    /// (`true`) or the side wall (`false`).
    fn intersect(&self, o: &Point3<f64>, d: &Vector3<f64>) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        let mut consider = |s: f64, z: f64| {
            if s > 0.0 && best.is_none_or(|(b, _)| s < b) {
                best = Some((s, z));
            }
        };
        let (ox, oy) = (o.x - self.center[0], o.y - self.center[1]);
        let a = d.x * d.x + d.y * d.y;
        if a > 0.0 {
            let b = 2.0 * (ox * d.x + oy * d.y);
            let c = ox * ox + oy * oy - self.radius * self.radius;
            let disc = b * b - 4.0 * a * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                for s in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                    let z = o.z + s * d.z;
                    if (0.0..=self.height).contains(&z) {
                        consider(s, z);
                    }
                }
            }
        }
        if d.z != 0.0 {
            let s = (self.height - o.z) / d.z;
            let (x, y) = (ox + s * d.x, oy + s * d.y);
            if x * x + y * y <= self.radius * self.radius {
                consider(s, self.height);
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub objects: Vec<SceneObject>,
}

impl SyntheticScene {
    pub fn table() -> Plane {
        Plane::new(0.0, 0.0, 1.0, 0.0).expect("unit normal")
    }

    /// Four glasses of different classes side by side in front of the head camera.
    pub fn four_glasses(classes: &[GlassClassSpec]) -> Self {
        let pick = |id: u32| classes.iter().find(|c| c.id == id).expect("class present");
        Self {
            objects: vec![
                SceneObject::glass(pick(1), 0.70, -0.27),
                SceneObject::glass(pick(3), 0.62, -0.09),
                SceneObject::glass(pick(4), 0.66, 0.09),
                SceneObject::glass(pick(6), 0.58, 0.26),
            ],
        }
    }

    /// `n_glasses` random glasses plus up to two bottles or decoys, with
    /// footprints at least 0.12 m apart (axis distance) inside the region
    /// `x ∈ [0.45, 0.85]`, `|y| ≤ 0.35`.
    pub fn random(rng: &mut impl Rng, classes: &[GlassClassSpec], n_glasses: usize, n_extras: usize) -> Self {
        let mut objects: Vec<SceneObject> = Vec::new();
        let total = n_glasses + n_extras;
        let mut attempts = 0;
        while objects.len() < total && attempts < 10_000 {
            attempts += 1;
            let x = rng.random_range(0.45..0.85);
            let y = rng.random_range(-0.35..0.35);
            // keep objects apart and out of each other's line of sight (the camera looks along +x)
            let clear = objects
                .iter()
                .all(|o| (o.center[0] - x).hypot(o.center[1] - y) > 0.16 && (o.center[1] - y).abs() > 0.11);
            if !clear {
                continue;
            }
            let obj = if objects.len() < n_glasses {
                SceneObject::glass(&classes[rng.random_range(0..classes.len())], x, y)
            } else if rng.random_bool(0.5) {
                SceneObject::bottle(x, y)
            } else {
                SceneObject::decoy(x, y, classes[rng.random_range(0..classes.len())].height)
            };
            objects.push(obj);
        }
        Self { objects }
    }

    pub fn glasses(&self) -> impl Iterator<Item = &SceneObject> {
        self.objects.iter().filter(|o| o.class_id().is_some())
    }
}

/// Head RGB-D camera `HEAD_HEIGHT` above the table, its optical axis
/// tilted `tilt_deg` from straight down and panned `pan_deg` about `+z`.
pub fn head_camera(name: &str, pan_deg: f64, tilt_deg: f64, width: u32, height: u32) -> CameraProfile {
    let f = 0.7 * width as f64;
    let eye = Point3::new(0.0, 0.0, HEAD_HEIGHT);
    let (t, p) = (tilt_deg.to_radians(), pan_deg.to_radians());
    let dir = Vector3::new(t.sin() * p.cos(), t.sin() * p.sin(), -t.cos());
    CameraProfile::pinhole(name, f, f, (width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0, width, height)
        .looking_at(eye, eye + dir, Vector3::z())
}

/// Rendered passes of one frame. Depth (mm) sees glass bodies as opaque.
#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub depth: DepthFrame,
    pub clean: RgbImage,
    pub capped: RgbImage,
    pub chalk: RgbImage,
}

impl RenderedFrame {
    pub fn pass(&self, pass: Pass) -> &RgbImage {
        match pass {
            Pass::Clean => &self.clean,
            Pass::Capped => &self.capped,
            Pass::Chalk => &self.chalk,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Hit {
    Table,
    Object { index: usize, z: f64, top: bool },
    Nothing,
}

/// Ray-casts every pixel center. Gaussian depth noise with standard
/// deviation `depth_noise_mm` is added to valid depths when positive.
pub fn render(scene: &SyntheticScene, cam: &CameraProfile, depth_noise_mm: f64, seed: u64) -> RenderedFrame {
    let (w, h) = (cam.width, cam.height);
    let origin = cam.center();
    let to_world = cam.rotation.inverse();
    let rows: Vec<Vec<(u16, [[u8; 3]; 3])>> = (0..h)
        .into_par_iter()
        .map(|v| {
            (0..w)
                .map(|u| {
                    let Ok(ray) = cam.undistort(&Point2::new(u as f64, v as f64)) else {
                        return (0, [[0; 3]; 3]);
                    };
                    // ray has unit camera z, so the ray parameter is the depth
                    let d = to_world * ray;
                    let mut best = (f64::INFINITY, Hit::Nothing);
                    if d.z < 0.0 {
                        best = (-origin.z / d.z, Hit::Table);
                    }
                    for (i, obj) in scene.objects.iter().enumerate() {
                        if let Some((s, z)) = obj.intersect(&origin, &d) {
                            if s < best.0 {
                                best = (s, Hit::Object { index: i, z, top: z == obj.height });
                            }
                        }
                    }
                    let depth = if best.0.is_finite() { (best.0 * 1000.0).round().min(65535.0) as u16 } else { 0 };
                    (depth, shade(scene, best.1))
                })
                .collect()
        })
        .collect();

    let mut depth = DepthFrame::zeros(w, h);
    let mut clean = RgbImage::new(w, h);
    let mut capped = RgbImage::new(w, h);
    let mut chalk = RgbImage::new(w, h);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (depth_noise_mm > 0.0).then(|| Normal::new(0.0, depth_noise_mm).expect("positive sigma"));
    for (v, row) in rows.into_iter().enumerate() {
        for (u, (mm, [c0, c1, c2])) in row.into_iter().enumerate() {
            let (u, v) = (u as u32, v as u32);
            let mm = match (&noise, mm) {
                (Some(n), m) if m > 0 => (m as f64 + n.sample(&mut rng)).round().clamp(1.0, 65535.0) as u16,
                _ => mm,
            };
            depth.set(u, v, mm);
            clean.put_pixel(u, v, Rgb(c0));
            capped.put_pixel(u, v, Rgb(c1));
            chalk.put_pixel(u, v, Rgb(c2));
        }
    }
    RenderedFrame {
        depth,
        clean,
        capped,
        chalk,
    }
}

/// Colors in the clean, capped and chalk passes.
fn shade(scene: &SyntheticScene, hit: Hit) -> [[u8; 3]; 3] {
    let blend = |a: [u8; 3], b: [u8; 3], t: f64| {
        [0, 1, 2].map(|i| (a[i] as f64 * (1.0 - t) + b[i] as f64 * t).round() as u8)
    };
    match hit {
        Hit::Nothing => [[0; 3]; 3],
        Hit::Table => [TABLE_RGB; 3],
        Hit::Object { index, z, top } => {
            let obj = &scene.objects[index];
            let shading = if top { 1.0 } else { 0.85 };
            let dim = |c: [u8; 3]| c.map(|v| (v as f64 * shading).round() as u8);
            match obj.kind {
                ObjectKind::Glass { .. } => {
                    let clean = blend(TABLE_RGB, [225, 230, 232], 0.35);
                    let capped = if z >= obj.height - CAP_THICKNESS { CAP_RGB } else { dim(GLASS_CAPPED_RGB) };
                    [clean, capped, dim(CHALK_RGB)]
                }
                ObjectKind::Bottle => [dim(BOTTLE_RGB); 3],
                ObjectKind::GreenDecoy => [dim(CAP_RGB); 3],
            }
        }
    }
}

/// Bounds of an object's silhouette in mask-box convention: the box spans
/// the pixel indices whose centers lie inside the projected cylinder.
/// `None` when any part is behind the camera or the box misses the image.
pub fn analytic_bbox(obj: &SceneObject, cam: &CameraProfile) -> Option<BBox> {
    const SAMPLES: usize = 4096;
    let mut pixels = Vec::with_capacity(2 * SAMPLES);
    for z in [0.0, obj.height] {
        for k in 0..SAMPLES {
            let a = k as f64 / SAMPLES as f64 * std::f64::consts::TAU;
            let p = Point3::new(obj.center[0] + obj.radius * a.cos(), obj.center[1] + obj.radius * a.sin(), z);
            pixels.push(cam.project(&p).ok()?);
        }
    }
    let b = BBox::enclosing(&pixels)?;
    let x0 = b.x.ceil().max(0.0);
    let y0 = b.y.ceil().max(0.0);
    let x1 = b.right().floor().min(cam.width as f64 - 1.0);
    let y1 = b.bottom().floor().min(cam.height as f64 - 1.0);
    (x1 >= x0 && y1 >= y0).then(|| BBox::new(x0, y0, x1 - x0 + 1.0, y1 - y0 + 1.0))
}

/// Sensor resolution of the written cameras.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneWriteOptions {
    pub width: u32,
    pub height: u32,
    pub depth_noise_mm: f64,
    pub seed: u64,
}

impl Default for SceneWriteOptions {
    fn default() -> Self {
        Self {
            width: 640,
            height: 360,
            depth_noise_mm: 0.0,
            seed: 0,
        }
    }
}

/// Pan and tilt (degrees) of head pose `pose` on the 5 × 5 capture grid.
pub fn head_pose_angles(pose: u32) -> (f64, f64) {
    let pan = -20.0 + 10.0 * (pose % 5) as f64;
    let tilt = 20.0 + 5.0 * (pose / 5) as f64;
    (pan, tilt)
}

/// The five-camera rig for a synthetic scene: per-pose entries
/// (`<camera>/<pose>`) for head-mounted cameras, one entry per static camera.
pub fn synthetic_rig(opts: &SceneWriteOptions) -> Rig {
    let (w, h) = (opts.width, opts.height);
    let mut rig = Rig {
        cameras: Vec::new(),
        table: Some(SyntheticScene::table()),
    };
    for pose in 0..HEAD_POSES {
        let (pan, tilt) = head_pose_angles(pose);
        let name = |cam: &str| format!("{cam}/{pose:02}");
        let head = head_camera(&name(HEAD_CAMERAS[0]), pan, tilt, w, h)
            .with_distortion(Distortion::BrownConrady([0.02, -0.01, 0.0, 0.0, 0.0]));
        rig.upsert(head.clone());
        for (cam, side) in [(HEAD_CAMERAS[1], 1.0), (HEAD_CAMERAS[2], -1.0)] {
            let mut eye = head_camera(&name(cam), pan, tilt, w, h)
                .with_distortion(Distortion::FisheyeEquidistant([0.05, 0.01, 0.0, 0.0]));
            // eyes sit 6 cm to either side of the head camera
            let offset = head.rotation.inverse() * Vector3::new(-side * 0.06, 0.0, 0.0);
            eye.translation -= eye.rotation * offset;
            rig.upsert(eye);
        }
    }
    for (cam, side) in [(STATIC_CAMERAS[0], 1.0), (STATIC_CAMERAS[1], -1.0)] {
        let f = 0.7 * w as f64;
        let c = CameraProfile::pinhole(cam, f, f, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0, w, h)
            .looking_at(Point3::new(0.65, side * 0.85, 0.75), Point3::new(0.65, 0.0, 0.0), Vector3::z());
        rig.upsert(c);
    }
    rig
}

/// Ground truth written next to a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub scene: SyntheticScene,
    pub options: SceneWriteOptions,
}

/// Writes a complete three-pass, five-camera scene to `root/scene_<id>` and
/// returns that directory.
pub fn write_scene(root: &Path, scene_id: &str, scene: &SyntheticScene, opts: &SceneWriteOptions) -> std::io::Result<PathBuf> {
    let dir = root.join(format!("scene_{scene_id}"));
    let rig = synthetic_rig(opts);
    let mut jobs: Vec<(String, u32, &CameraProfile)> = Vec::new();
    for cam in &rig.cameras {
        let (base, pose) = match cam.name.split_once('/') {
            Some((b, p)) => (b.to_string(), p.parse().map_err(std::io::Error::other)?),
            None => (cam.name.clone(), 0),
        };
        jobs.push((base, pose, cam));
    }
    jobs.par_iter().enumerate().try_for_each(|(i, (base, pose, cam))| -> std::io::Result<()> {
        let frame = render(scene, cam, opts.depth_noise_mm, opts.seed.wrapping_add(i as u64));
        for pass in Pass::ALL {
            let sub = dir.join(pass.as_str()).join(base);
            std::fs::create_dir_all(&sub)?;
            frame
                .pass(pass)
                .save(sub.join(format!("{pose:02}.png")))
                .map_err(std::io::Error::other)?;
            if RGBD_CAMERAS.contains(&base.as_str()) {
                write_depth_png(&sub.join(format!("{pose:02}.depth.png")), &frame.depth)?;
            }
        }
        Ok(())
    })?;
    std::fs::write(dir.join("rig.toml"), rig.to_toml_string())?;
    let truth = SceneTruth {
        scene: scene.clone(),
        options: *opts,
    };
    std::fs::write(
        dir.join("ground_truth.json"),
        serde_json::to_string_pretty(&truth).map_err(std::io::Error::other)?,
    )?;
    Ok(dir)
}
