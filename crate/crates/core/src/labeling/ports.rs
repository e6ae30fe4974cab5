//! Verifier and segmenter ports, plus deterministic geometric mocks that stand
//! in for the neural models.

use std::path::Path;

use image::RgbImage;
use nalgebra::Point2;
use thiserror::Error;

use super::{fill_convex_hull, BBox, Mask};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StageError {
    #[error("plugin timed out after {0:.1} s")]
    Timeout(f64),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("plugin reported failure: {0}")]
    Plugin(String),
    #[error("plugin i/o: {0}")]
    Io(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// A detection reported by a verifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    pub label: String,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyRequest<'a> {
    pub image: &'a RgbImage,
    /// On-disk copy of `image`, if one exists; process plugins need a path.
    pub image_path: Option<&'a Path>,
    pub points: &'a [Point2<f64>],
    pub bbox_hint: Option<BBox>,
    pub class_names: &'a [String],
}

#[derive(Debug, Clone, Copy)]
pub struct SegmentRequest<'a> {
    pub image: &'a RgbImage,
    pub image_path: Option<&'a Path>,
    pub points: &'a [Point2<f64>],
}

/// Confirms that a region looks like a drinking glass.
pub trait VerifierPort: Send + Sync {
    fn verify(&self, req: &VerifyRequest<'_>) -> Result<Vec<Detection>, StageError>;
}

/// Produces a binary mask from point prompts.
pub trait SegmenterPort: Send + Sync {
    fn segment(&self, req: &SegmentRequest<'_>) -> Result<Mask, StageError>;
}

/// Behaviour of [`MockVerifier`].
#[derive(Debug, Clone, PartialEq)]
pub enum MockVerifierMode {
    /// Reports the hint box back as a glass with the given score.
    Echo { score: f64 },
    /// Reports a glass far away from any hint.
    Disjoint,
    /// Answers with a message that violates the protocol.
    Malformed,
    /// Echoes hints, except those overlapping any of the listed regions.
    RejectRegions { score: f64, regions: Vec<BBox> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockVerifier {
    pub mode: MockVerifierMode,
}

impl MockVerifier {
    pub fn echo() -> Self {
        Self {
            mode: MockVerifierMode::Echo { score: 1.0 },
        }
    }

    pub fn with_mode(mode: MockVerifierMode) -> Self {
        Self { mode }
    }

    fn label(req: &VerifyRequest<'_>) -> String {
        req.class_names.first().cloned().unwrap_or_else(|| "drink glass".to_string())
    }
}

impl Default for MockVerifier {
    fn default() -> Self {
        Self::echo()
    }
}

impl VerifierPort for MockVerifier {
    fn verify(&self, req: &VerifyRequest<'_>) -> Result<Vec<Detection>, StageError> {
        let hint = req.bbox_hint.or_else(|| BBox::enclosing(req.points));
        match &self.mode {
            MockVerifierMode::Echo { score } => Ok(hint
                .map(|bbox| Detection {
                    bbox,
                    score: *score,
                    label: Self::label(req),
                })
                .into_iter()
                .collect()),
            MockVerifierMode::Disjoint => {
                let far = match hint {
                    Some(h) => BBox::new(h.right() + 10.0 * h.w.max(1.0), h.bottom() + 10.0 * h.h.max(1.0), h.w, h.h),
                    None => BBox::new(0.0, 0.0, 1.0, 1.0),
                };
                Ok(vec![Detection {
                    bbox: far,
                    score: 1.0,
                    label: Self::label(req),
                }])
            }
            MockVerifierMode::Malformed => Err(StageError::Protocol("mock verifier sent a malformed message".into())),
            MockVerifierMode::RejectRegions { score, regions } => Ok(hint
                .filter(|h| regions.iter().all(|r| r.iou(h) == 0.0))
                .map(|bbox| Detection {
                    bbox,
                    score: *score,
                    label: Self::label(req),
                })
                .into_iter()
                .collect()),
        }
    }
}

/// Fills the convex hull of the prompt points; model-free and deterministic.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MockSegmenter;

impl SegmenterPort for MockSegmenter {
    fn segment(&self, req: &SegmentRequest<'_>) -> Result<Mask, StageError> {
        Ok(fill_convex_hull(req.points, req.image.width(), req.image.height()))
    }
}

/// Segmenter that always fails; exercises the error path.
#[derive(Debug, Clone, Copy, Default)]
pub struct FailingSegmenter;

impl SegmenterPort for FailingSegmenter {
    fn segment(&self, _req: &SegmentRequest<'_>) -> Result<Mask, StageError> {
        Err(StageError::Plugin("segmenter unavailable".into()))
    }
}
