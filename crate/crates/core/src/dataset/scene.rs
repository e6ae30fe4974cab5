use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{ColorType, ImageDecoder, ImageReader, RgbImage};
use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::camera::Rig;
use crate::geometry::DepthFrame;

/// Head-mounted cameras, captured at every head pose.
pub const HEAD_CAMERAS: [&str; 3] = ["head_rgbd", "left_eye", "right_eye"];
/// Fixed cameras, one capture per scene.
pub const STATIC_CAMERAS: [&str; 2] = ["static_left", "static_right"];
/// Cameras that also record depth.
pub const RGBD_CAMERAS: [&str; 3] = ["head_rgbd", "static_left", "static_right"];
pub const HEAD_POSES: u32 = 25;
/// Frames in a complete scene: 25 poses of 3 head cameras plus 2 static captures.
pub const FRAMES_PER_SCENE: usize = HEAD_CAMERAS.len() * HEAD_POSES as usize + STATIC_CAMERAS.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pass {
    Clean,
    Capped,
    Chalk,
}

impl Pass {
    pub const ALL: [Pass; 3] = [Pass::Clean, Pass::Capped, Pass::Chalk];

    pub fn as_str(&self) -> &'static str {
        match self {
            Pass::Clean => "clean",
            Pass::Capped => "capped",
            Pass::Chalk => "chalk",
        }
    }
}

/// One capture: a camera at a pose.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrameKey {
    pub camera: String,
    pub pose: u32,
}

impl FrameKey {
    pub fn new(camera: impl Into<String>, pose: u32) -> Self {
        Self {
            camera: camera.into(),
            pose,
        }
    }

    /// `<camera>/<pose>` with a two-digit pose.
    pub fn id(&self) -> String {
        format!("{}/{:02}", self.camera, self.pose)
    }

    pub fn has_depth(&self) -> bool {
        RGBD_CAMERAS.contains(&self.camera.as_str())
    }

    /// Path of the color image relative to the scene root.
    pub fn color_path(&self, pass: Pass) -> PathBuf {
        PathBuf::from(pass.as_str())
            .join(&self.camera)
            .join(format!("{:02}.png", self.pose))
    }

    pub fn depth_path(&self, pass: Pass) -> PathBuf {
        PathBuf::from(pass.as_str())
            .join(&self.camera)
            .join(format!("{:02}.depth.png", self.pose))
    }
}

/// All captures a complete scene should contain, in a fixed order.
pub fn expected_frames() -> Vec<FrameKey> {
    let mut keys: Vec<FrameKey> = HEAD_CAMERAS
        .iter()
        .flat_map(|c| (0..HEAD_POSES).map(move |p| FrameKey::new(*c, p)))
        .collect();
    keys.extend(STATIC_CAMERAS.iter().map(|c| FrameKey::new(*c, 0)));
    keys.sort();
    keys
}

/// Files found for one pass of one capture.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassFiles {
    pub color: Option<PathBuf>,
    pub depth: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    /// Passes with no files at all.
    pub absent_passes: Vec<Pass>,
    /// Expected files that do not exist, relative to the scene root.
    pub missing: Vec<PathBuf>,
    /// Files that exist but cannot be used.
    pub errors: Vec<(PathBuf, String)>,
}

impl SceneReport {
    pub fn is_complete(&self) -> bool {
        self.absent_passes.is_empty() && self.missing.is_empty() && self.errors.is_empty()
    }
}

/// Index of a scene directory. Nothing is decoded beyond image headers.
#[derive(Debug, Clone)]
pub struct SceneCapture {
    pub scene_id: String,
    pub root: PathBuf,
    pub rig: Option<Rig>,
    pub frames: BTreeMap<FrameKey, BTreeMap<Pass, PassFiles>>,
    pub report: SceneReport,
}

impl SceneCapture {
    /// Captures with at least one usable file.
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn files(&self, key: &FrameKey, pass: Pass) -> Option<&PassFiles> {
        self.frames.get(key).and_then(|m| m.get(&pass))
    }

    /// Captures that have everything labeling needs: capped depth and
    /// color plus clean color.
    pub fn labelable(&self) -> Vec<&FrameKey> {
        self.frames
            .iter()
            .filter(|(_, passes)| {
                let capped = passes.get(&Pass::Capped);
                capped.is_some_and(|f| f.color.is_some() && f.depth.is_some())
                    && passes.get(&Pass::Clean).is_some_and(|f| f.color.is_some())
            })
            .map(|(k, _)| k)
            .collect()
    }
}

/// Indexes `dir` (laid out as `<pass>/<camera>/<pose>.png` plus
/// `<pose>.depth.png` for depth cameras, with `rig.toml` at the root).
/// Missing or unusable files are reported, never fatal.
pub fn load_scene(dir: &Path) -> Result<SceneCapture, DatasetError> {
    if !dir.is_dir() {
        return Err(DatasetError::NotADirectory(dir.to_path_buf()));
    }
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let scene_id = name.strip_prefix("scene_").unwrap_or(&name).to_string();
    let mut report = SceneReport::default();

    let rig_path = dir.join("rig.toml");
    let rig = if rig_path.is_file() {
        match Rig::load(&rig_path) {
            Ok(r) => Some(r),
            Err(e) => {
                report.errors.push((PathBuf::from("rig.toml"), e.to_string()));
                None
            }
        }
    } else {
        report.missing.push(PathBuf::from("rig.toml"));
        None
    };

    let mut frames: BTreeMap<FrameKey, BTreeMap<Pass, PassFiles>> = BTreeMap::new();
    for pass in Pass::ALL {
        if !dir.join(pass.as_str()).is_dir() {
            report.absent_passes.push(pass);
            continue;
        }
        for key in expected_frames() {
            let mut files = PassFiles::default();
            let color = key.color_path(pass);
            match check_image(&dir.join(&color), &[ColorType::Rgb8, ColorType::Rgba8]) {
                Check::Ok => files.color = Some(color),
                Check::Missing => report.missing.push(color),
                Check::Bad(e) => report.errors.push((color, e)),
            }
            if key.has_depth() {
                let depth = key.depth_path(pass);
                match check_image(&dir.join(&depth), &[ColorType::L16]) {
                    Check::Ok => files.depth = Some(depth),
                    Check::Missing => report.missing.push(depth),
                    Check::Bad(e) => report.errors.push((depth, e)),
                }
            }
            if files.color.is_some() || files.depth.is_some() {
                frames.entry(key).or_default().insert(pass, files);
            }
        }
    }
    Ok(SceneCapture {
        scene_id,
        root: dir.to_path_buf(),
        rig,
        frames,
        report,
    })
}

enum Check {
    Ok,
    Missing,
    Bad(String),
}

fn check_image(path: &Path, allowed: &[ColorType]) -> Check {
    if !path.is_file() {
        return Check::Missing;
    }
    let decoder = ImageReader::open(path)
        .map_err(|e| e.to_string())
        .and_then(|r| r.with_guessed_format().map_err(|e| e.to_string()))
        .and_then(|r| r.into_decoder().map_err(|e| e.to_string()));
    match decoder {
        Ok(d) if allowed.contains(&d.color_type()) => Check::Ok,
        Ok(d) => Check::Bad(format!("unexpected pixel format {:?}", d.color_type())),
        Err(e) => Check::Bad(e),
    }
}

/// Reads a 16-bit single-channel PNG of millimeter depths.
pub fn read_depth_png(path: &Path) -> Result<DepthFrame, DatasetError> {
    let img = image::open(path).map_err(|e| DatasetError::image(path, e))?;
    if img.color() != ColorType::L16 {
        return Err(DatasetError::Format(path.to_path_buf(), format!("depth must be 16-bit gray, got {:?}", img.color())));
    }
    let gray = img.into_luma16();
    let (w, h) = gray.dimensions();
    DepthFrame::new(w, h, gray.into_raw()).map_err(|e| DatasetError::Format(path.to_path_buf(), e.to_string()))
}

pub fn write_depth_png(path: &Path, frame: &DepthFrame) -> std::io::Result<()> {
    let img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(frame.width, frame.height, frame.depth.clone())
        .expect("depth grid matches its dimensions");
    img.save(path).map_err(std::io::Error::other)
}

pub fn read_color_png(path: &Path) -> Result<RgbImage, DatasetError> {
    Ok(image::open(path).map_err(|e| DatasetError::image(path, e))?.to_rgb8())
}
