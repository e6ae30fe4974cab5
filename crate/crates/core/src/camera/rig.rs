use std::path::Path;

use nalgebra::{Matrix3, Point2, Point3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::{CameraError, CameraProfile, Correspondence, Distortion, DistortionKind};
use crate::geometry::Plane;

/// On-disk form of a [`CameraProfile`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub name: String,
    pub model: DistortionKind,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// brown_conrady: `[k1, k2, p1, p2, k3]`; fisheye_equidistant: `[k1, k2, k3, k4]`.
    pub dist: Vec<f64>,
    /// World → camera rotation, row-major.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub width: u32,
    pub height: u32,
}

impl TryFrom<CameraRecord> for CameraProfile {
    type Error = CameraError;

    fn try_from(r: CameraRecord) -> Result<Self, Self::Error> {
        let m = Matrix3::from_row_slice(&r.rotation);
        let cam = CameraProfile {
            distortion: Distortion::from_parts(r.model, &r.dist)?,
            name: r.name,
            fx: r.fx,
            fy: r.fy,
            cx: r.cx,
            cy: r.cy,
            rotation: Rotation3::from_matrix_unchecked(m),
            translation: Vector3::from(r.translation),
            width: r.width,
            height: r.height,
        };
        cam.validate()?;
        Ok(cam)
    }
}

impl From<CameraProfile> for CameraRecord {
    fn from(c: CameraProfile) -> Self {
        let m = c.rotation.matrix();
        let mut rotation = [0.0; 9];
        for (i, v) in rotation.iter_mut().enumerate() {
            *v = m[(i / 3, i % 3)];
        }
        CameraRecord {
            name: c.name,
            model: c.distortion.kind(),
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            dist: c.distortion.coefficients().to_vec(),
            rotation,
            translation: [c.translation.x, c.translation.y, c.translation.z],
            width: c.width,
            height: c.height,
        }
    }
}

/// Calibrated set of cameras, optionally with a surveyed table plane.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Rig {
    #[serde(default, rename = "camera")]
    pub cameras: Vec<CameraProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Plane>,
}

impl Rig {
    pub fn camera(&self, name: &str) -> Result<&CameraProfile, CameraError> {
        self.cameras
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| CameraError::UnknownCamera(name.to_string()))
    }

    /// Profile for one capture: `<camera>/<pose>` (two-digit pose) when the
    /// rig has per-pose entries, else the plain `<camera>` entry.
    pub fn frame_camera(&self, camera: &str, pose: u32) -> Result<&CameraProfile, CameraError> {
        let posed = format!("{camera}/{pose:02}");
        self.camera(&posed).or_else(|_| self.camera(camera))
    }

    /// Inserts or replaces the camera with the same name.
    pub fn upsert(&mut self, cam: CameraProfile) {
        match self.cameras.iter_mut().find(|c| c.name == cam.name) {
            Some(slot) => *slot = cam,
            None => self.cameras.push(cam),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, CameraError> {
        let rig: Rig = toml::from_str(s).map_err(|e| CameraError::Parse(e.to_string()))?;
        let mut names: Vec<&str> = rig.cameras.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(CameraError::Parse(format!("duplicate camera '{}'", w[0])));
        }
        Ok(rig)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("rig serializes to TOML")
    }

    pub fn load(path: &Path) -> Result<Self, CameraError> {
        let text = std::fs::read_to_string(path).map_err(|e| CameraError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

/// Parses rows of `u v X Y Z` (whitespace or comma separated). Blank lines
/// and `#` comments are ignored.
pub fn parse_correspondences(text: &str) -> Result<Vec<Correspondence>, CameraError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::parse::<f64>)
            .collect();
        let vals = vals.map_err(|e| CameraError::Parse(format!("line {}: {e}", lineno + 1)))?;
        if vals.len() != 5 || !vals.iter().all(|v| v.is_finite()) {
            return Err(CameraError::Parse(format!(
                "line {}: expected 5 finite numbers (u v X Y Z)",
                lineno + 1
            )));
        }
        out.push(Correspondence {
            pixel: Point2::new(vals[0], vals[1]),
            world: Point3::new(vals[2], vals[3], vals[4]),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const RIG: &str = r#"
[[camera]]
name = "head_rgbd"
model = "brown_conrady"
fx = 600.0
fy = 600.0
cx = 320.0
cy = 240.0
dist = [-0.1, 0.01, 0.0, 0.0, 0.0]
rotation = [1, 0, 0, 0, 1, 0, 0, 0, 1]
translation = [0.0, 0.0, 1.0]
width = 640
height = 480

[[camera]]
name = "left_eye"
model = "fisheye_equidistant"
fx = 1000.0
fy = 1000.0
cx = 1920.0
cy = 1080.0
dist = [0.01, 0.0, 0.0, 0.0]
rotation = [1, 0, 0, 0, 1, 0, 0, 0, 1]
translation = [0.1, 0.0, 1.0]
width = 3840
height = 2160

[table]
a = 0.0
b = 0.0
c = 1.0
d = 0.0
"#;

    #[test]
    fn parses_rig_and_round_trips() {
        let rig = Rig::from_toml_str(RIG).unwrap();
        assert_eq!(rig.cameras.len(), 2);
        let eye = rig.camera("left_eye").unwrap();
        assert_eq!(eye.distortion.kind(), DistortionKind::FisheyeEquidistant);
        assert!(rig.table.is_some());
        let again = Rig::from_toml_str(&rig.to_toml_string()).unwrap();
        assert_eq!(again, rig);
        assert!(matches!(rig.camera("nope"), Err(CameraError::UnknownCamera(_))));
    }

    #[test]
    fn rejects_non_rotation() {
        let bad = RIG.replacen("rotation = [1, 0, 0, 0, 1, 0, 0, 0, 1]", "rotation = [2, 0, 0, 0, 1, 0, 0, 0, 1]", 1);
        assert!(Rig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn correspondence_rows() {
        let text = "# u v X Y Z\n10 20 0.1 0.2 0.0\n\n30.5,40.5,0.3,0.4,0.05 # marker 2\n";
        let c = parse_correspondences(text).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[1].pixel, Point2::new(30.5, 40.5));
        assert!(parse_correspondences("1 2 3").is_err());
        assert!(parse_correspondences("1 2 3 4 x").is_err());
    }
}
