use std::fs;

use glasslabel::dataset::{
    export_coco, label_scene, load_scene, validate_coco, FrameKey, Pass, PipelineConfig, FRAMES_PER_SCENE,
};
use glasslabel::labeling::ports::{MockSegmenter, MockVerifier};
use glasslabel::labeling::{default_classes, project_annotations, Ports, KEYPOINT_CATEGORY_ID};
use glasslabel::synthetic::{analytic_bbox, write_scene, SceneWriteOptions, SyntheticScene};

fn small() -> SceneWriteOptions {
    SceneWriteOptions {
        width: 320,
        height: 180,
        depth_noise_mm: 0.0,
        seed: 3,
    }
}

#[test]
fn written_scene_loads_completely_and_labels() {
    let root = tempfile::tempdir().unwrap();
    let scene = SyntheticScene::four_glasses(&default_classes());
    let dir = write_scene(root.path(), "007", &scene, &small()).unwrap();
    let capture = load_scene(&dir).unwrap();
    assert_eq!(capture.scene_id, "007");
    assert_eq!(capture.frame_count(), FRAMES_PER_SCENE);
    assert!(capture.report.is_complete(), "{:?}", capture.report);
    // labeling needs depth: 25 head poses plus two static cameras
    assert_eq!(capture.labelable().len(), 27);

    let cfg = PipelineConfig::default();
    let (v, s) = (MockVerifier::echo(), MockSegmenter);
    let labels = label_scene(&capture, &cfg, Ports { verifier: &v, segmenter: &s }).unwrap();
    assert!(labels.failures.is_empty(), "{:?}", labels.failures);
    assert_eq!(labels.images.len(), 27);
    let glasses = labels.annotations.iter().filter(|a| a.class_id != KEYPOINT_CATEGORY_ID).count();
    let keypoints = labels.annotations.len() - glasses;
    assert!(glasses >= 27, "only {glasses} glass annotations");
    assert!(keypoints > 0 && keypoints <= glasses);
    let doc = export_coco(&labels.annotations, &labels.images, &cfg.classes).unwrap();
    assert!(validate_coco(&doc).passed());
}

#[test]
fn missing_pass_and_broken_files_are_reported() {
    let root = tempfile::tempdir().unwrap();
    let scene = SyntheticScene::four_glasses(&default_classes());
    let dir = write_scene(root.path(), "008", &scene, &small()).unwrap();
    fs::remove_dir_all(dir.join("chalk")).unwrap();
    let key = FrameKey::new("head_rgbd", 4);
    // a color image where 16-bit depth is expected
    fs::copy(dir.join(key.color_path(Pass::Capped)), dir.join(key.depth_path(Pass::Capped))).unwrap();
    fs::remove_file(dir.join(FrameKey::new("left_eye", 9).color_path(Pass::Clean))).unwrap();

    let capture = load_scene(&dir).unwrap();
    assert_eq!(capture.report.absent_passes, vec![Pass::Chalk]);
    assert_eq!(capture.report.missing, vec![FrameKey::new("left_eye", 9).color_path(Pass::Clean)]);
    assert_eq!(capture.report.errors.len(), 1);
    assert_eq!(capture.report.errors[0].0, key.depth_path(Pass::Capped));
    assert_eq!(capture.frame_count(), FRAMES_PER_SCENE);
    assert_eq!(capture.labelable().len(), 26);
    assert!(!capture.labelable().contains(&&key));
}

#[test]
fn head_labels_transfer_to_the_eyes() {
    let opts = small();
    let classes = default_classes();
    let scene = SyntheticScene::four_glasses(&classes);
    let root = tempfile::tempdir().unwrap();
    let dir = write_scene(root.path(), "009", &scene, &opts).unwrap();
    let capture = load_scene(&dir).unwrap();
    let rig = capture.rig.as_ref().unwrap();
    let table = rig.table.unwrap();
    let cfg = PipelineConfig::default();
    let (v, s) = (MockVerifier::echo(), MockSegmenter);
    let labels = label_scene(&capture, &cfg, Ports { verifier: &v, segmenter: &s }).unwrap();
    let head: Vec<_> = labels
        .annotations
        .iter()
        .filter(|a| a.camera == "head_rgbd" && a.frame_id == "12" && a.class_id != KEYPOINT_CATEGORY_ID)
        .cloned()
        .collect();
    assert_eq!(head.len(), 4);
    let from = rig.frame_camera("head_rgbd", 12).unwrap();
    let to = rig.frame_camera("left_eye", 12).unwrap();
    let (moved, report) = project_annotations(&head, from, to, &table, &classes);
    assert_eq!(report.transferred, 4);
    for ann in &moved {
        assert!(ann.mask.is_none());
        let obj = scene.glasses().find(|o| o.class_id() == Some(ann.class_id)).unwrap();
        let truth = analytic_bbox(obj, to).unwrap();
        assert!(ann.bbox.iou(&truth) > 0.7, "class {} iou {}", ann.class_id, ann.bbox.iou(&truth));
    }
}
