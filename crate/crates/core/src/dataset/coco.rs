//! COCO detection documents: export, parsing and validation.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use nalgebra::Point2;
use serde::{Deserialize, Serialize, Serializer};

use super::DatasetError;
use crate::labeling::{Annotation, BBox, GlassClassSpec, Mask, Rle, KEYPOINT_CATEGORY_ID, KEYPOINT_CATEGORY_NAME};

/// Exported floats are rounded to this many decimals.
pub const FLOAT_DECIMALS: i32 = 6;

fn round6(v: f64) -> f64 {
    let scale = 10f64.powi(FLOAT_DECIMALS);
    let r = (v * scale).round() / scale;
    // avoid "-0.0" in output
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn ser_f64<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round6(*v))
}

fn ser_f64_array<S: Serializer, const N: usize>(v: &[f64; N], s: S) -> Result<S::Ok, S::Error> {
    v.map(round6).serialize(s)
}

fn ser_opt_point<S: Serializer>(v: &Option<[f64; 2]>, s: S) -> Result<S::Ok, S::Error> {
    v.map(|p| p.map(round6)).serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoInfo {
    pub description: String,
    pub version: String,
}

impl Default for CocoInfo {
    fn default() -> Self {
        Self {
            description: "auto-labeled drinking glasses".into(),
            version: "1.0".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoLicense {
    pub id: u64,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub camera: String,
    #[serde(default)]
    pub scene_id: String,
    #[serde(default)]
    pub frame_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u32,
    pub name: String,
    pub supercategory: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    #[serde(serialize_with = "ser_f64_array")]
    pub bbox: [f64; 4],
    #[serde(serialize_with = "ser_f64")]
    pub area: f64,
    pub iscrowd: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<Rle>,
    #[serde(serialize_with = "ser_f64")]
    pub score: f64,
    #[serde(default, serialize_with = "ser_opt_point", skip_serializing_if = "Option::is_none")]
    pub base_point: Option<[f64; 2]>,
    #[serde(default)]
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoDocument {
    #[serde(default)]
    pub info: CocoInfo,
    #[serde(default)]
    pub licenses: Vec<CocoLicense>,
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

/// An image annotations can refer to, identified by scene, frame and camera.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ImageEntry {
    pub scene_id: String,
    pub frame_id: String,
    pub camera: String,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

/// The glass classes followed by the keypoint class.
pub fn categories(classes: &[GlassClassSpec]) -> Vec<CocoCategory> {
    let mut cats: Vec<CocoCategory> = classes
        .iter()
        .map(|c| CocoCategory {
            id: c.id,
            name: c.name.clone(),
            supercategory: "glass".into(),
        })
        .collect();
    cats.push(CocoCategory {
        id: KEYPOINT_CATEGORY_ID,
        name: KEYPOINT_CATEGORY_NAME.into(),
        supercategory: "keypoint".into(),
    });
    cats.sort_by_key(|c| c.id);
    cats
}

/// Builds a document with ids assigned in a fixed order: images sorted by
/// (scene, frame, camera), annotations by image then input order. Every
/// annotation must match a listed image and a known class.
pub fn export_coco(
    annotations: &[Annotation],
    images: &[ImageEntry],
    classes: &[GlassClassSpec],
) -> Result<CocoDocument, DatasetError> {
    let mut sorted: Vec<&ImageEntry> = images.iter().collect();
    sorted.sort();
    sorted.dedup_by(|a, b| (&a.scene_id, &a.frame_id, &a.camera) == (&b.scene_id, &b.frame_id, &b.camera));
    let ids: BTreeMap<(&str, &str, &str), u64> = sorted
        .iter()
        .enumerate()
        .map(|(i, e)| ((e.scene_id.as_str(), e.frame_id.as_str(), e.camera.as_str()), i as u64 + 1))
        .collect();
    let cats = categories(classes);
    let known: BTreeSet<u32> = cats.iter().map(|c| c.id).collect();

    let mut offenders = Vec::new();
    let mut rows: Vec<(u64, usize)> = Vec::with_capacity(annotations.len());
    for (i, a) in annotations.iter().enumerate() {
        match ids.get(&(a.scene_id.as_str(), a.frame_id.as_str(), a.camera.as_str())) {
            Some(&img) if known.contains(&a.class_id) => rows.push((img, i)),
            Some(_) => offenders.push(format!("annotation {i}: unknown category {}", a.class_id)),
            None => offenders.push(format!(
                "annotation {i}: no image for scene '{}' frame '{}' camera '{}'",
                a.scene_id, a.frame_id, a.camera
            )),
        }
    }
    if !offenders.is_empty() {
        return Err(DatasetError::DanglingReferences(offenders));
    }
    rows.sort();

    let coco_images = sorted
        .iter()
        .enumerate()
        .map(|(i, e)| CocoImage {
            id: i as u64 + 1,
            file_name: e.file_name.clone(),
            width: e.width,
            height: e.height,
            camera: e.camera.clone(),
            scene_id: e.scene_id.clone(),
            frame_id: e.frame_id.clone(),
        })
        .collect();
    let coco_annotations = rows
        .iter()
        .enumerate()
        .map(|(k, &(image_id, i))| {
            let a = &annotations[i];
            let segmentation = a.mask.as_ref().map(Mask::to_rle);
            let area = match &segmentation {
                Some(rle) => rle.area() as f64,
                None => a.bbox.area(),
            };
            CocoAnnotation {
                id: k as u64 + 1,
                image_id,
                category_id: a.class_id,
                bbox: a.bbox.as_array(),
                area,
                iscrowd: 0,
                segmentation,
                score: a.score,
                base_point: a.base_point.map(|p| [p.x, p.y]),
                clipped: a.clipped,
            }
        })
        .collect();
    Ok(CocoDocument {
        info: CocoInfo::default(),
        licenses: vec![CocoLicense {
            id: 1,
            name: "unspecified".into(),
        }],
        images: coco_images,
        annotations: coco_annotations,
        categories: cats,
    })
}

impl CocoDocument {
    /// Canonical text: pretty JSON, 6-decimal floats, trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document serializes");
        s.push('\n');
        s
    }

    pub fn image(&self, id: u64) -> Option<&CocoImage> {
        self.images.iter().find(|i| i.id == id)
    }

    /// Library annotations, carrying their image's scene, frame and camera.
    /// Annotations whose image is missing are skipped.
    pub fn to_annotations(&self) -> Vec<(u64, Annotation)> {
        self.annotations
            .iter()
            .filter_map(|c| {
                let img = self.image(c.image_id)?;
                let mut a = Annotation::new(c.category_id, BBox::new(c.bbox[0], c.bbox[1], c.bbox[2], c.bbox[3]), img.camera.clone())
                    .in_frame(img.scene_id.clone(), img.frame_id.clone());
                a.mask = c.segmentation.as_ref().and_then(|r| Mask::from_rle(r).ok());
                a.score = c.score;
                a.base_point = c.base_point.map(|p| Point2::new(p[0], p[1]));
                a.clipped = c.clipped;
                Some((c.id, a))
            })
            .collect()
    }

    /// Image entries matching this document's images.
    pub fn image_entries(&self) -> Vec<ImageEntry> {
        self.images
            .iter()
            .map(|i| ImageEntry {
                scene_id: i.scene_id.clone(),
                frame_id: i.frame_id.clone(),
                camera: i.camera.clone(),
                file_name: i.file_name.clone(),
                width: i.width,
                height: i.height,
            })
            .collect()
    }
}

pub fn parse_coco(text: &str) -> Result<CocoDocument, DatasetError> {
    serde_json::from_str(text).map_err(|e| DatasetError::Parse(e.to_string()))
}

pub fn read_coco(path: &Path) -> Result<CocoDocument, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    parse_coco(&text)
}

/// Writes `text` through a temporary file in the same directory and renames
/// it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| DatasetError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| DatasetError::io(path, e))?;
    tmp.persist(path).map_err(|e| DatasetError::io(path, e.error))?;
    Ok(())
}

pub fn write_coco(doc: &CocoDocument, path: &Path) -> Result<(), DatasetError> {
    write_atomic(path, doc.to_json().as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DanglingImage,
    UndeclaredCategory,
    NonPositiveBox,
    MaskSizeMismatch,
    RleSumMismatch,
    DuplicateId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Offending annotation id, when the violation concerns one.
    pub annotation_id: Option<u64>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn kinds(&self) -> BTreeSet<ViolationKind> {
        self.violations.iter().map(|v| v.kind).collect()
    }
}

/// Checks referential integrity, id uniqueness, box positivity and mask
/// consistency.
pub fn validate_coco(doc: &CocoDocument) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |kind, annotation_id, message: String| {
        violations.push(Violation {
            kind,
            annotation_id,
            message,
        })
    };

    let mut seen = BTreeSet::new();
    for img in &doc.images {
        if !seen.insert(img.id) {
            push(ViolationKind::DuplicateId, None, format!("image id {} repeated", img.id));
        }
    }
    let mut seen = BTreeSet::new();
    for c in &doc.categories {
        if !seen.insert(c.id) {
            push(ViolationKind::DuplicateId, None, format!("category id {} repeated", c.id));
        }
    }
    let images: BTreeMap<u64, &CocoImage> = doc.images.iter().map(|i| (i.id, i)).collect();
    let cats: BTreeSet<u32> = doc.categories.iter().map(|c| c.id).collect();
    let mut seen = BTreeSet::new();
    for a in &doc.annotations {
        let id = Some(a.id);
        if !seen.insert(a.id) {
            push(ViolationKind::DuplicateId, id, format!("annotation id {} repeated", a.id));
        }
        let image = images.get(&a.image_id);
        if image.is_none() {
            push(ViolationKind::DanglingImage, id, format!("annotation {} refers to missing image {}", a.id, a.image_id));
        }
        if !cats.contains(&a.category_id) {
            push(
                ViolationKind::UndeclaredCategory,
                id,
                format!("annotation {} uses undeclared category {}", a.id, a.category_id),
            );
        }
        if !(a.bbox[2] > 0.0 && a.bbox[3] > 0.0) || !a.bbox.iter().all(|v| v.is_finite()) {
            push(
                ViolationKind::NonPositiveBox,
                id,
                format!("annotation {} has bbox {:?}", a.id, a.bbox),
            );
        }
        if let Some(rle) = &a.segmentation {
            if let Some(img) = image {
                if rle.size != [img.height, img.width] {
                    push(
                        ViolationKind::MaskSizeMismatch,
                        id,
                        format!(
                            "annotation {} mask is {:?}, image {} is [{}, {}]",
                            a.id, rle.size, img.id, img.height, img.width
                        ),
                    );
                }
            }
            let total = rle.size[0] as u64 * rle.size[1] as u64;
            let sum: u64 = rle.counts.iter().map(|&c| c as u64).sum();
            if sum != total {
                push(
                    ViolationKind::RleSumMismatch,
                    id,
                    format!("annotation {} run lengths sum to {sum}, mask has {total} pixels", a.id),
                );
            }
        }
    }
    ValidationReport { violations }
}

/// Parses and validates; a parse failure is an error, not a violation.
pub fn validate_coco_str(text: &str) -> Result<ValidationReport, DatasetError> {
    Ok(validate_coco(&parse_coco(text)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::default_classes;

    fn entry(camera: &str, frame: &str) -> ImageEntry {
        ImageEntry {
            scene_id: "001".into(),
            frame_id: frame.into(),
            camera: camera.into(),
            file_name: format!("clean/{camera}/{frame}.png"),
            width: 20,
            height: 10,
        }
    }

    fn glass(x: f64, camera: &str, frame: &str) -> Annotation {
        let mut a = Annotation::new(4, BBox::new(x, 2.0, 3.0, 4.0), camera).in_frame("001", frame);
        a.mask = Some(Mask::from_fn(20, 10, |px, py| (x as u32..x as u32 + 3).contains(&px) && (2..6).contains(&py)));
        a.score = 0.987654321;
        a.base_point = Some(Point2::new(x + 1.5, 6.0));
        a
    }

    #[test]
    fn four_annotations_one_image_seven_categories() {
        let anns: Vec<Annotation> = (0..4).map(|i| glass(i as f64 * 4.0, "head_rgbd", "00")).collect();
        let doc = export_coco(&anns, &[entry("head_rgbd", "00")], &default_classes()).unwrap();
        assert_eq!(doc.images.len(), 1);
        assert_eq!(doc.annotations.len(), 4);
        assert_eq!(doc.categories.len(), 7);
        assert!(validate_coco(&doc).passed());
        assert_eq!(doc.annotations[0].area, 12.0);
    }

    #[test]
    fn keypoint_category_is_reserved_id() {
        let kp = Annotation::new(KEYPOINT_CATEGORY_ID, BBox::new(1.0, 1.0, 2.0, 2.0), "head_rgbd").in_frame("001", "00");
        let doc = export_coco(&[kp], &[entry("head_rgbd", "00")], &default_classes()).unwrap();
        let cat = doc.categories.iter().find(|c| c.id == doc.annotations[0].category_id).unwrap();
        assert_eq!(cat.name, KEYPOINT_CATEGORY_NAME);
    }

    #[test]
    fn dangling_annotation_rejected() {
        let err = export_coco(&[glass(0.0, "left_eye", "00")], &[entry("head_rgbd", "00")], &default_classes());
        assert!(matches!(err, Err(DatasetError::DanglingReferences(v)) if v.len() == 1));
    }

    #[test]
    fn ids_follow_image_order_not_input_order() {
        let anns = vec![glass(0.0, "static_left", "00"), glass(4.0, "head_rgbd", "03"), glass(8.0, "head_rgbd", "01")];
        let images = vec![entry("static_left", "00"), entry("head_rgbd", "03"), entry("head_rgbd", "01")];
        let doc = export_coco(&anns, &images, &default_classes()).unwrap();
        let order: Vec<f64> = doc.annotations.iter().map(|a| a.bbox[0]).collect();
        // (scene, frame, camera): frame "00" of static_left precedes head_rgbd frames "01", "03"
        assert_eq!(order, vec![0.0, 8.0, 4.0]);
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let anns: Vec<Annotation> = (0..3).map(|i| glass(i as f64 * 4.0 + 0.1234567891, "head_rgbd", "00")).collect();
        let doc = export_coco(&anns, &[entry("head_rgbd", "00")], &default_classes()).unwrap();
        let a = doc.to_json();
        let b = parse_coco(&a).unwrap().to_json();
        assert_eq!(a, b);
        assert!(a.contains("0.987654"));
        assert!(!a.contains("0.9876543"));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.json");
        std::fs::write(&p, "old").unwrap();
        let doc = export_coco(&[], &[entry("head_rgbd", "00")], &default_classes()).unwrap();
        write_coco(&doc, &p).unwrap();
        assert_eq!(read_coco(&p).unwrap(), doc);
    }

    #[test]
    fn parse_failure_is_distinct() {
        assert!(matches!(validate_coco_str("{not json"), Err(DatasetError::Parse(_))));
    }
}
