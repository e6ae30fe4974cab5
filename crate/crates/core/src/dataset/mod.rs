//! Scene directories, COCO export and validation, heatmap files, debug
//! overlays and the pipeline configuration file.

mod coco;
mod config;
mod heatmap_io;
mod label;
mod overlay;
mod scene;

pub use coco::{
    categories, export_coco, parse_coco, read_coco, validate_coco, validate_coco_str, write_atomic, write_coco,
    CocoAnnotation, CocoCategory, CocoDocument, CocoImage, CocoInfo, CocoLicense, ImageEntry, ValidationReport,
    Violation, ViolationKind, FLOAT_DECIMALS,
};
pub use config::{HeatmapConfig, PipelineConfig};
pub use heatmap_io::{decode_heatmap, encode_heatmap, heatmap_to_gray, parse_proposals, read_heatmap, write_heatmap, HEATMAP_MAGIC};
pub use label::{frame_id, label_scene, parse_frame_id, FrameFailure, SceneLabels};
pub use overlay::{class_color, draw_rect, render_overlay, OverlayOptions};
pub use scene::{
    expected_frames, load_scene, read_color_png, read_depth_png, write_depth_png, FrameKey, Pass, PassFiles,
    SceneCapture, SceneReport, FRAMES_PER_SCENE, HEAD_CAMERAS, HEAD_POSES, RGBD_CAMERAS, STATIC_CAMERAS,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", .path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{} is not a directory", .0.display())]
    NotADirectory(PathBuf),
    #[error("{path}: {msg}", path = .0.display(), msg = .1)]
    Format(PathBuf, String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("dangling references: {}", .0.join("; "))]
    DanglingReferences(Vec<String>),
}

impl DatasetError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn image(path: &Path, source: image::ImageError) -> Self {
        Self::Image {
            path: path.to_path_buf(),
            source,
        }
    }
}
