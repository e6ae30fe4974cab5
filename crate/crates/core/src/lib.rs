//! Geometry-driven auto-labeling of drinking glasses in multi-camera tabletop
//! RGB-D scenes, plus the downstream quantities a pouring robot needs: glass
//! base points, base-point heatmaps and pouring targets.

pub mod camera;
pub mod dataset;
pub mod geometry;
pub mod heatmap;
pub mod labeling;
pub mod pouring;
pub mod synthetic;

pub use camera::{CameraProfile, Distortion, Rig};
pub use dataset::{CocoDocument, DatasetError, PipelineConfig};
pub use geometry::{DepthFrame, Plane, PointCloud};
pub use heatmap::{BasePoint, Heatmap, KeypointProposal};
pub use labeling::{Annotation, BBox, GlassClassSpec, LabelConfig, LabelError, Mask, Rle};
pub use pouring::{PouringConfig, PouringPlan, Workspace};
