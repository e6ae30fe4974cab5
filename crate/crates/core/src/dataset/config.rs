use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::heatmap::{DEFAULT_KERNEL_SIZE, DEFAULT_KEYPOINT_BOX, DEFAULT_SIGMA};
use crate::labeling::{default_classes, GlassClassSpec, LabelConfig};
use crate::pouring::PouringConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapConfig {
    pub kernel_size: u32,
    pub sigma: f64,
    pub box_size: u32,
    /// Add a keypoint-class box at the base point of every labeled glass.
    pub emit_keypoints: bool,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            kernel_size: DEFAULT_KERNEL_SIZE,
            sigma: DEFAULT_SIGMA,
            box_size: DEFAULT_KEYPOINT_BOX,
            emit_keypoints: true,
        }
    }
}

/// Everything the CLI reads from `--config`; every section is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub classes: Vec<GlassClassSpec>,
    pub label: LabelConfig,
    pub heatmap: HeatmapConfig,
    pub pouring: PouringConfig,
    /// Per-request plugin timeout (s).
    pub plugin_timeout_s: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            classes: default_classes(),
            label: LabelConfig::default(),
            heatmap: HeatmapConfig::default(),
            pouring: PouringConfig::default(),
            plugin_timeout_s: 30.0,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, DatasetError> {
        let cfg: Self = toml::from_str(s).map_err(|e| DatasetError::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::Parse(format!("config: {m}")));
        if self.classes.is_empty() {
            return bad("at least one class is required".into());
        }
        let mut ids: Vec<u32> = self.classes.iter().map(|c| c.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("class ids must be unique".into());
        }
        if ids.contains(&crate::labeling::KEYPOINT_CATEGORY_ID) {
            return bad(format!("class id {} is reserved for keypoints", crate::labeling::KEYPOINT_CATEGORY_ID));
        }
        if let Some(c) = self.classes.iter().find(|c| !(c.height > 0.0 && c.diameter > 0.0)) {
            return bad(format!("class {} needs positive height and diameter", c.id));
        }
        if !(self.plugin_timeout_s > 0.0) {
            return bad("plugin_timeout_s must be positive".into());
        }
        self.label.validate().or_else(|e| bad(e.to_string()))?;
        self.pouring.workspace.validate().or_else(|e| bad(e.to_string()))
    }

    pub fn class(&self, id: u32) -> Option<&GlassClassSpec> {
        self.classes.iter().find(|c| c.id == id)
    }
}
