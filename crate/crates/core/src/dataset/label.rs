//! Labeling every depth capture of a scene directory.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coco::ImageEntry;
use super::config::PipelineConfig;
use super::scene::{read_color_png, read_depth_png, FrameKey, Pass, SceneCapture};
use super::DatasetError;
use crate::heatmap::{to_keypoint_annotation, HeatmapError};
use crate::labeling::{label_frame, Annotation, FrameInput, FrameReport, LabelError, Ports};

/// A capture that could not be labeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFailure {
    pub frame: String,
    pub message: String,
    /// The failure came from a verifier or segmenter.
    pub plugin: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SceneLabels {
    pub annotations: Vec<Annotation>,
    /// Clean images of every labeled capture.
    pub images: Vec<ImageEntry>,
    pub reports: Vec<FrameReport>,
    pub failures: Vec<FrameFailure>,
}

/// Frame id used in exports: the two-digit pose. Scene, frame and camera
/// together identify an image.
pub fn frame_id(pose: u32) -> String {
    format!("{pose:02}")
}

pub fn parse_frame_id(id: &str) -> Option<u32> {
    id.parse().ok()
}

/// Runs the cascade on every capture with depth, in parallel. Frames that
/// fail are reported and skipped; annotations come out in frame order.
pub fn label_scene(scene: &SceneCapture, cfg: &PipelineConfig, ports: Ports<'_>) -> Result<SceneLabels, DatasetError> {
    scene
        .rig
        .as_ref()
        .ok_or_else(|| DatasetError::Format(scene.root.join("rig.toml"), "scene has no usable rig".into()))?;
    let keys: Vec<&FrameKey> = scene.labelable().into_iter().filter(|k| k.has_depth()).collect();

    let results: Vec<Result<FrameResult, FrameFailure>> =
        keys.par_iter().map(|key| label_capture(scene, key, cfg, ports)).collect();

    let mut out = SceneLabels::default();
    for result in results {
        match result {
            Ok(r) => {
                out.annotations.extend(r.annotations);
                out.images.push(r.image);
                out.reports.push(r.report);
            }
            Err(f) => out.failures.push(f),
        }
    }
    Ok(out)
}

struct FrameResult {
    annotations: Vec<Annotation>,
    image: ImageEntry,
    report: FrameReport,
}

fn label_capture(scene: &SceneCapture, key: &FrameKey, cfg: &PipelineConfig, ports: Ports<'_>) -> Result<FrameResult, FrameFailure> {
    let fail = |message: String, plugin: bool| FrameFailure {
        frame: key.id(),
        message,
        plugin,
    };
    let rig = scene.rig.as_ref().expect("checked by caller");
    let cam = rig.frame_camera(&key.camera, key.pose).map_err(|e| fail(e.to_string(), false))?;
    let depth = read_depth_png(&scene.root.join(key.depth_path(Pass::Capped))).map_err(|e| fail(e.to_string(), false))?;
    let capped = read_color_png(&scene.root.join(key.color_path(Pass::Capped))).map_err(|e| fail(e.to_string(), false))?;
    let clean_rel = key.color_path(Pass::Clean);
    let clean_path = scene.root.join(&clean_rel);
    let clean = read_color_png(&clean_path).map_err(|e| fail(e.to_string(), false))?;
    let frame = frame_id(key.pose);

    let input = FrameInput {
        scene_id: &scene.scene_id,
        frame_id: &frame,
        camera: cam,
        depth: &depth,
        capped: &capped,
        clean: &clean,
        clean_path: Some(&clean_path),
    };
    let outcome = label_frame(&input, rig.table.as_ref(), &cfg.classes, &cfg.label, ports)
        .map_err(|e| fail(e.to_string(), matches!(e, LabelError::Stage(_))))?;

    let mut annotations = Vec::with_capacity(outcome.annotations.len() * 2);
    for mut ann in outcome.annotations {
        ann.camera = key.camera.clone();
        let keypoint = match (cfg.heatmap.emit_keypoints, ann.base_point) {
            (true, Some(p)) => match to_keypoint_annotation(&p, cfg.heatmap.box_size, cam) {
                Ok(k) => Some(k),
                Err(HeatmapError::OutsideImage(..)) => None,
                Err(e) => return Err(fail(e.to_string(), false)),
            },
            _ => None,
        };
        let (scene_id, frame_id) = (ann.scene_id.clone(), ann.frame_id.clone());
        annotations.push(ann);
        if let Some(k) = keypoint {
            let mut k = k.in_frame(scene_id, frame_id);
            k.camera = key.camera.clone();
            annotations.push(k);
        }
    }
    let mut report = outcome.report;
    report.camera = key.camera.clone();
    Ok(FrameResult {
        annotations,
        image: ImageEntry {
            scene_id: scene.scene_id.clone(),
            frame_id: frame,
            camera: key.camera.clone(),
            file_name: format!("scene_{}/{}", scene.scene_id, clean_rel.to_string_lossy()),
            width: clean.width(),
            height: clean.height(),
        },
        report,
    })
}
