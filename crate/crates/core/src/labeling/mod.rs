//! The auto-labeling cascade: off-table clusters are classified by height,
//! gated on cap color, confirmed by a verifier port, segmented through a
//! segmenter port, filtered on mask width and turned into boxes.

mod candidates;
mod classes;
mod color;
mod mask;
mod pipeline;
pub mod plugin;
pub mod ports;
pub mod protocol;
mod transfer;

pub use candidates::{
    cap_top_indices, extract_candidates, farthest_point_sample, CandidateConfig, ClusterCandidate,
};
pub use classes::{
    assign_class_by_height, default_classes, GlassClassSpec, KEYPOINT_CATEGORY_ID, KEYPOINT_CATEGORY_NAME,
};
pub use color::{srgb_to_cielab, verify_color, ColorGate, Lab};
pub use mask::{convex_hull, fill_convex_hull, mask_to_bbox, BBox, Mask, Rle};
pub use pipeline::{
    filter_mask, label_frame, prompt_segmenter, verify_with_detector, FrameInput, FrameOutcome, FrameReport,
    LabelConfig, Ports, StageCounts, StageEvent,
};
pub use transfer::{axis_base_from_hull_point, glass_silhouette_bbox, project_annotations, ProjectionReport};

use nalgebra::Point2;
use thiserror::Error;

use crate::camera::CameraError;
use crate::geometry::GeometryError;
use crate::heatmap::HeatmapError;
use ports::StageError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error(transparent)]
    Heatmap(#[from] HeatmapError),
    #[error("mask has no set pixels")]
    EmptyMask,
    #[error("invalid run-length encoding: {0}")]
    InvalidRle(String),
    #[error("color footprint is empty")]
    EmptyFootprint,
    #[error("no sample point lies inside the image")]
    NoSamplePoints,
    #[error("unknown class id {0}")]
    UnknownClass(u32),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// One labeled object instance in one camera image.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub class_id: u32,
    pub bbox: BBox,
    pub mask: Option<Mask>,
    /// Product of stage confidences, in `[0, 1]`.
    pub score: f64,
    pub camera: String,
    pub scene_id: String,
    pub frame_id: String,
    /// Image location of the glass's table-contact center, when known.
    pub base_point: Option<Point2<f64>>,
    /// Set on keypoint boxes that extend past the image border (stored unclipped).
    pub clipped: bool,
}

impl Annotation {
    pub fn new(class_id: u32, bbox: BBox, camera: impl Into<String>) -> Self {
        Self {
            class_id,
            bbox,
            mask: None,
            score: 1.0,
            camera: camera.into(),
            scene_id: String::new(),
            frame_id: String::new(),
            base_point: None,
            clipped: false,
        }
    }

    pub fn in_frame(mut self, scene_id: impl Into<String>, frame_id: impl Into<String>) -> Self {
        self.scene_id = scene_id.into();
        self.frame_id = frame_id.into();
        self
    }
}
