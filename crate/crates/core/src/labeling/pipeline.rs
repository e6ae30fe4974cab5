use std::path::Path;

use image::RgbImage;
use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};

use super::ports::{Detection, SegmentRequest, SegmenterPort, StageError, VerifierPort, VerifyRequest};
use super::{
    assign_class_by_height, cap_top_indices, extract_candidates, farthest_point_sample, glass_silhouette_bbox,
    mask_to_bbox, verify_color, Annotation, BBox, CandidateConfig, ClusterCandidate, ColorGate, GlassClassSpec,
    LabelError, Mask,
};
use crate::camera::CameraProfile;
use crate::geometry::{deproject_depth, fit_plane_ransac, DepthFrame, Plane, RansacConfig};
use crate::heatmap::compute_base_point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelConfig {
    pub candidates: CandidateConfig,
    pub ransac: RansacConfig,
    /// Allowed |height − class height| (m).
    pub height_tolerance: f64,
    pub color_gate: ColorGate,
    /// Share of a cluster's highest points treated as the cap top.
    pub cap_fraction: f64,
    /// Upper bound on prompt points sent to the color gate and segmenter.
    pub max_samples: usize,
    pub verify_iou: f64,
    /// Masks wider than this multiple of the expected glass width are rejected.
    pub width_factor: f64,
    /// Drop candidates whose verifier call fails instead of keeping them unverified.
    pub strict: bool,
    /// Prompt words for the verifier; empty means the class names plus "drink glass".
    pub verifier_prompts: Vec<String>,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            candidates: CandidateConfig::default(),
            ransac: RansacConfig::default(),
            height_tolerance: 0.015,
            color_gate: ColorGate::default(),
            cap_fraction: 0.2,
            max_samples: 64,
            verify_iou: 0.5,
            width_factor: 1.5,
            strict: false,
            verifier_prompts: Vec::new(),
        }
    }
}

impl LabelConfig {
    pub fn validate(&self) -> Result<(), LabelError> {
        let bad = |what: &str| Err(LabelError::InvalidConfig(what.to_string()));
        if !(self.height_tolerance > 0.0) {
            return bad("height_tolerance must be positive");
        }
        if !(self.cap_fraction > 0.0 && self.cap_fraction <= 1.0) {
            return bad("cap_fraction must be in (0, 1]");
        }
        if self.max_samples == 0 {
            return bad("max_samples must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.verify_iou) {
            return bad("verify_iou must be in [0, 1]");
        }
        if !(self.width_factor > 0.0) {
            return bad("width_factor must be positive");
        }
        if !(self.candidates.eps > 0.0) || self.candidates.min_points == 0 {
            return bad("clustering needs eps > 0 and min_points >= 1");
        }
        self.color_gate.validate()
    }

    fn prompts(&self, classes: &[GlassClassSpec]) -> Vec<String> {
        if !self.verifier_prompts.is_empty() {
            return self.verifier_prompts.clone();
        }
        classes
            .iter()
            .map(|c| c.name.clone())
            .chain(std::iter::once("drink glass".to_string()))
            .collect()
    }
}

/// One camera frame of a scene. Depth and `capped` come from the capped
/// pass; `clean` is the pixel-aligned clean-pass image the labels belong to.
#[derive(Debug, Clone, Copy)]
pub struct FrameInput<'a> {
    pub scene_id: &'a str,
    pub frame_id: &'a str,
    pub camera: &'a CameraProfile,
    pub depth: &'a DepthFrame,
    pub capped: &'a RgbImage,
    pub clean: &'a RgbImage,
    pub clean_path: Option<&'a Path>,
}

#[derive(Clone, Copy)]
pub struct Ports<'a> {
    pub verifier: &'a dyn VerifierPort,
    pub segmenter: &'a dyn SegmenterPort,
}

/// Number of candidates alive after each stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub candidates: usize,
    pub classified: usize,
    pub color_passed: usize,
    pub verified: usize,
    pub segmented: usize,
    pub width_passed: usize,
}

impl StageCounts {
    pub fn as_array(&self) -> [usize; 6] {
        [
            self.candidates,
            self.classified,
            self.color_passed,
            self.verified,
            self.segmented,
            self.width_passed,
        ]
    }

    pub fn is_monotone(&self) -> bool {
        self.as_array().windows(2).all(|w| w[1] <= w[0])
    }
}

/// Why a candidate left the cascade, or a non-fatal problem along the way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEvent {
    pub candidate: usize,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub scene_id: String,
    pub frame_id: String,
    pub camera: String,
    pub table: Plane,
    pub counts: StageCounts,
    pub events: Vec<StageEvent>,
    /// Verifier or segmenter calls that failed.
    pub plugin_errors: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub annotations: Vec<Annotation>,
    pub candidates: Vec<ClusterCandidate>,
    pub report: FrameReport,
}

/// Confirms a hint box with the verifier. Returns the best detection whose
/// IoU with the hint is at least `min_iou`, or `None`.
pub fn verify_with_detector(
    image: &RgbImage,
    image_path: Option<&Path>,
    points: &[Point2<f64>],
    bbox_hint: &BBox,
    class_names: &[String],
    verifier: &dyn VerifierPort,
    min_iou: f64,
) -> Result<Option<Detection>, StageError> {
    let dets = verifier.verify(&VerifyRequest {
        image,
        image_path,
        points,
        bbox_hint: Some(*bbox_hint),
        class_names,
    })?;
    Ok(dets
        .into_iter()
        .filter(|d| d.bbox.iou(bbox_hint) >= min_iou)
        .max_by(|a, b| a.score.total_cmp(&b.score)))
}

/// Prompts the segmenter with the sample points that fall inside the image.
pub fn prompt_segmenter(
    image: &RgbImage,
    image_path: Option<&Path>,
    points: &[Point2<f64>],
    segmenter: &dyn SegmenterPort,
) -> Result<Mask, LabelError> {
    let inside: Vec<Point2<f64>> = points
        .iter()
        .copied()
        .filter(|p| p.x >= -0.5 && p.y >= -0.5 && p.x < image.width() as f64 - 0.5 && p.y < image.height() as f64 - 0.5)
        .collect();
    if inside.is_empty() {
        return Err(LabelError::NoSamplePoints);
    }
    let mask = segmenter.segment(&SegmentRequest {
        image,
        image_path,
        points: &inside,
    })?;
    if (mask.width, mask.height) != (image.width(), image.height()) {
        return Err(StageError::Protocol(format!(
            "mask is {}x{}, image is {}x{}",
            mask.width,
            mask.height,
            image.width(),
            image.height()
        ))
        .into());
    }
    if mask.is_empty() {
        return Err(LabelError::EmptyMask);
    }
    Ok(mask)
}

/// Accepts a mask whose pixel width is at most `width_factor` times the
/// width of the class cylinder projected standing at `base`. The silhouette
/// includes perspective lean, so tall glasses away from the image center are
/// not mistaken for merged masks.
pub fn filter_mask(
    mask: &Mask,
    class: &GlassClassSpec,
    cam: &CameraProfile,
    base: &Point3<f64>,
    table: &Plane,
    width_factor: f64,
) -> Result<bool, LabelError> {
    let bbox = mask_to_bbox(mask)?;
    let z = cam.world_to_camera(base).z;
    if z <= 0.0 {
        return Err(crate::camera::CameraError::BehindCamera(z).into());
    }
    let expected = glass_silhouette_bbox(class, base, table, cam)?.w;
    Ok(bbox.w <= width_factor * expected)
}

/// Runs the whole cascade on one frame. `table` is fitted from the frame
/// when not given. Per-candidate failures are recorded in the report and
/// never abort the frame.
pub fn label_frame(
    input: &FrameInput<'_>,
    table: Option<&Plane>,
    classes: &[GlassClassSpec],
    cfg: &LabelConfig,
    ports: Ports<'_>,
) -> Result<FrameOutcome, LabelError> {
    cfg.validate()?;
    let cam = input.camera;
    let cloud = deproject_depth(input.depth, cam)?.transformed(&cam.extrinsics().inverse(), "world");
    let table = match table {
        Some(t) => t.canonicalized(),
        None => fit_plane_ransac(&cloud, &cfg.ransac)?.plane,
    };
    let mut candidates = extract_candidates(&cloud, &table, &cfg.candidates)?;
    let prompts = cfg.prompts(classes);
    let mut counts = StageCounts {
        candidates: candidates.len(),
        ..Default::default()
    };
    let mut events = Vec::new();
    let mut annotations = Vec::new();
    let mut plugin_errors = 0;

    for (idx, cand) in candidates.iter_mut().enumerate() {
        let mut drop = |stage: &str, message: String| {
            events.push(StageEvent {
                candidate: idx,
                stage: stage.to_string(),
                message,
            })
        };

        cand.class_id = assign_class_by_height(cand.height, classes, cfg.height_tolerance);
        let Some(class) = cand.class_id.and_then(|id| classes.iter().find(|c| c.id == id)) else {
            drop("height", format!("height {:.4} m matches no class", cand.height));
            continue;
        };
        counts.classified += 1;

        let project_inside = |indices: &[usize]| -> Vec<Point2<f64>> {
            indices
                .iter()
                .filter_map(|&i| cam.project(&cloud.points[i]).ok())
                .filter(|px| cam.contains(px))
                .collect()
        };
        let cap_idx = cap_top_indices(&cand.cluster, &cloud, &table, cfg.cap_fraction);
        let cap_pixels = project_inside(&cap_idx);
        cand.footprint_pixels = farthest_point_sample(&cap_pixels, cfg.max_samples);
        match verify_color(input.capped, &cand.footprint_pixels, &cfg.color_gate) {
            Ok(true) => cand.color_ok = Some(true),
            Ok(false) => {
                cand.color_ok = Some(false);
                drop("color", "cap color outside the gate".into());
                continue;
            }
            Err(e) => {
                drop("color", e.to_string());
                continue;
            }
        }
        counts.color_passed += 1;

        let cap_points: Vec<Point3<f64>> = cap_idx.iter().map(|&i| cloud.points[i]).collect();
        let base = match compute_base_point(&cap_points, &table, cam) {
            Ok(b) => b,
            Err(e) => {
                drop("base_point", e.to_string());
                continue;
            }
        };
        let hint = match glass_silhouette_bbox(class, &base.p_proj, &table, cam) {
            Ok(h) => h,
            Err(e) => {
                drop("verify", e.to_string());
                continue;
            }
        };
        let body_pixels = project_inside(&cand.cluster.indices);
        let samples = farthest_point_sample(&body_pixels, cfg.max_samples);
        let score = match verify_with_detector(
            input.clean,
            input.clean_path,
            &samples,
            &hint,
            &prompts,
            ports.verifier,
            cfg.verify_iou,
        ) {
            Ok(Some(det)) => {
                cand.verifier_ok = Some(true);
                det.score
            }
            Ok(None) => {
                cand.verifier_ok = Some(false);
                drop("verify", "no glass detection overlaps the expected box".into());
                continue;
            }
            Err(e) if cfg.strict => {
                plugin_errors += 1;
                drop("verify", format!("{e}; dropped (strict)"));
                continue;
            }
            Err(e) => {
                plugin_errors += 1;
                drop("verify", format!("{e}; kept unverified"));
                1.0
            }
        };
        counts.verified += 1;

        let mask = match prompt_segmenter(input.clean, input.clean_path, &samples, ports.segmenter) {
            Ok(m) => m,
            Err(e) => {
                plugin_errors += 1;
                drop("segment", e.to_string());
                continue;
            }
        };
        counts.segmented += 1;

        match filter_mask(&mask, class, cam, &base.p_proj, &table, cfg.width_factor) {
            Ok(true) => {}
            Ok(false) => {
                drop("mask_width", "mask wider than the glass allows".into());
                continue;
            }
            Err(e) => {
                drop("mask_width", e.to_string());
                continue;
            }
        }
        counts.width_passed += 1;

        let bbox = mask_to_bbox(&mask)?;
        let mut ann = Annotation::new(class.id, bbox, cam.name.clone()).in_frame(input.scene_id, input.frame_id);
        ann.mask = Some(mask);
        ann.score = score;
        ann.base_point = Some(base.pixel);
        annotations.push(ann);
    }

    Ok(FrameOutcome {
        annotations,
        candidates,
        report: FrameReport {
            scene_id: input.scene_id.to_string(),
            frame_id: input.frame_id.to_string(),
            camera: cam.name.clone(),
            table,
            counts,
            events,
            plugin_errors,
        },
    })
}
