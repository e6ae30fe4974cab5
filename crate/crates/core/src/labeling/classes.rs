use serde::{Deserialize, Serialize};

/// COCO category id reserved for base-point keypoint boxes.
pub const KEYPOINT_CATEGORY_ID: u32 = 7;
pub const KEYPOINT_CATEGORY_NAME: &str = "keypoint";

/// A known glass type with its nominal dimensions (m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlassClassSpec {
    pub id: u32,
    pub name: String,
    pub height: f64,
    pub diameter: f64,
    /// Overrides the global height tolerance for this class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_tolerance: Option<f64>,
}

impl GlassClassSpec {
    pub fn new(id: u32, name: impl Into<String>, height: f64, diameter: f64) -> Self {
        Self {
            id,
            name: name.into(),
            height,
            diameter,
            height_tolerance: None,
        }
    }
}

/// The six glass types with nominal dimensions of common bar glassware.
pub fn default_classes() -> Vec<GlassClassSpec> {
    vec![
        GlassClassSpec::new(1, "high beer glass", 0.200, 0.070),
        GlassClassSpec::new(2, "beer glass with a handle", 0.155, 0.085),
        GlassClassSpec::new(3, "wine glass", 0.180, 0.080),
        GlassClassSpec::new(4, "water glass", 0.120, 0.075),
        GlassClassSpec::new(5, "whiskey glass", 0.090, 0.080),
        GlassClassSpec::new(6, "shot glass", 0.060, 0.045),
    ]
}

/// Nearest class by nominal height. Returns `None` when the smallest
/// deviation exceeds the tolerance (the class's own override if set, else
/// `tol`). Equal deviations resolve to the smaller class id.
pub fn assign_class_by_height(h: f64, classes: &[GlassClassSpec], tol: f64) -> Option<u32> {
    let best = classes.iter().min_by(|a, b| {
        (h - a.height)
            .abs()
            .total_cmp(&(h - b.height).abs())
            .then(a.id.cmp(&b.id))
    })?;
    let allowed = best.height_tolerance.unwrap_or(tol);
    ((h - best.height).abs() <= allowed).then_some(best.id)
}
