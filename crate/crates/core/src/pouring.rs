//! Pour targets: where a bottle spout should go for a detected glass.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraError, CameraProfile};
use crate::geometry::Plane;
use crate::labeling::{axis_base_from_hull_point, Annotation, BBox, GlassClassSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PouringError {
    #[error("degenerate workspace: {0}")]
    DegenerateWorkspace(&'static str),
    #[error("annotation class {annotation} does not match class spec {spec}")]
    ClassMismatch { annotation: u32, spec: u32 },
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error("cannot read pouring config: {0}")]
    Config(String),
}

/// Reachable pouring area in the robot frame (m). `y_min`/`y_max` bound
/// `|y|`; the area is mirrored about `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Workspace {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Height of the smallest glass class.
    pub h_min: f64,
    /// Height of the highest glass class.
    pub h_max: f64,
}

impl Default for Workspace {
    /// 0.35 m deep, 0.55 m wide, centered on `y = 0`.
    fn default() -> Self {
        Self {
            x_min: 0.35,
            x_max: 0.70,
            y_min: 0.0,
            y_max: 0.275,
            h_min: 0.06,
            h_max: 0.20,
        }
    }
}

impl Workspace {
    pub fn validate(&self) -> Result<(), PouringError> {
        if !(self.x_max > self.x_min) {
            return Err(PouringError::DegenerateWorkspace("x_max must exceed x_min"));
        }
        if !(self.y_max > self.y_min) {
            return Err(PouringError::DegenerateWorkspace("y_max must exceed y_min"));
        }
        if !(self.h_max > self.h_min) {
            return Err(PouringError::DegenerateWorkspace("h_max must exceed h_min"));
        }
        Ok(())
    }

    /// Width along y and depth along x.
    pub fn extent(&self) -> (f64, f64) {
        (2.0 * self.y_max, self.x_max - self.x_min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PouringConfig {
    pub workspace: Workspace,
    /// Offsets tuned for the smallest glass (m).
    pub p_x_min: f64,
    pub p_y_min: f64,
    /// Offsets tuned for the highest glass (m).
    pub p_x_max: f64,
    pub p_y_max: f64,
    /// Hull-to-axis offset per class id (m); classes not listed use diameter / 2.
    pub hull_offsets: BTreeMap<u32, f64>,
}

impl Default for PouringConfig {
    fn default() -> Self {
        Self {
            workspace: Workspace::default(),
            p_x_min: 0.010,
            p_y_min: 0.008,
            p_x_max: 0.020,
            p_y_max: 0.015,
            hull_offsets: BTreeMap::new(),
        }
    }
}

impl PouringConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, PouringError> {
        let cfg: Self = toml::from_str(s).map_err(|e| PouringError::Config(e.to_string()))?;
        cfg.workspace.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PouringError> {
        let text = std::fs::read_to_string(path).map_err(|e| PouringError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn hull_offset(&self, class: &GlassClassSpec) -> f64 {
        self.hull_offsets.get(&class.id).copied().unwrap_or(class.diameter / 2.0)
    }
}

/// Normalized position and height of a glass in the workspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFactors {
    pub epsilon: f64,
    pub gamma: f64,
    pub tau: f64,
}

impl ScalingFactors {
    pub fn in_unit_cube(&self) -> bool {
        [self.epsilon, self.gamma, self.tau].iter().all(|v| (0.0..=1.0).contains(v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PouringPlan {
    pub class_id: u32,
    /// Table point under the bottom-center of the box (camera-facing hull side).
    pub hull_point: [f64; 3],
    /// Table point on the glass axis.
    pub base: [f64; 3],
    /// Pour point above the glass opening.
    pub target: [f64; 3],
    pub offsets: [f64; 2],
    pub scaling: ScalingFactors,
    /// Set when the glass lies outside the workspace or height range.
    pub outside_workspace: bool,
}

/// Table point under the bottom-center of `bbox`.
pub fn glass_base_from_bbox(bbox: &BBox, cam: &CameraProfile, table: &Plane) -> Result<Point3<f64>, CameraError> {
    cam.cast_ray_to_plane(&bbox.bottom_center(), table)
}

/// Linear position and height scalings; `y` enters through its magnitude.
/// Values are not clamped.
pub fn scaling_factors(x_n: f64, y_n: f64, h_n: f64, ws: &Workspace) -> Result<ScalingFactors, PouringError> {
    ws.validate()?;
    Ok(ScalingFactors {
        epsilon: (x_n - ws.x_min) / (ws.x_max - ws.x_min),
        gamma: (y_n.abs() - ws.y_min) / (ws.y_max - ws.y_min),
        tau: (h_n - ws.h_min) / (ws.h_max - ws.h_min),
    })
}

/// Dynamic pouring offsets `(p_x, p_y)`: the small-glass offsets scaled by
/// position plus the high-glass offsets scaled by position and height.
pub fn pouring_offsets(s: &ScalingFactors, cfg: &PouringConfig) -> (f64, f64) {
    let p_x = s.epsilon * cfg.p_x_min + (s.epsilon * s.tau) * cfg.p_x_max;
    let p_y = s.gamma * cfg.p_y_min + (s.gamma * s.tau) * cfg.p_y_max;
    (p_x, p_y)
}

/// Pour plan for a detected glass. The y offset points away from `y = 0`,
/// mirroring the workspace.
pub fn build_pouring_plan(
    annotation: &Annotation,
    class: &GlassClassSpec,
    cam: &CameraProfile,
    table: &Plane,
    cfg: &PouringConfig,
) -> Result<PouringPlan, PouringError> {
    if annotation.class_id != class.id {
        return Err(PouringError::ClassMismatch {
            annotation: annotation.class_id,
            spec: class.id,
        });
    }
    let table = table.canonicalized();
    let hull = glass_base_from_bbox(&annotation.bbox, cam, &table)?;
    let base = axis_base_from_hull_point(&hull, cfg.hull_offset(class), cam, &table);
    let scaling = scaling_factors(base.x, base.y, class.height, &cfg.workspace)?;
    let (p_x, p_y) = pouring_offsets(&scaling, cfg);
    let side = if base.y < 0.0 { -1.0 } else { 1.0 };
    let target = base + Vector3::new(p_x, side * p_y, 0.0) + table.unit_normal() * class.height;
    Ok(PouringPlan {
        class_id: class.id,
        hull_point: hull.coords.into(),
        base: base.coords.into(),
        target: target.coords.into(),
        offsets: [p_x, p_y],
        outside_workspace: !scaling.in_unit_cube(),
        scaling,
    })
}
