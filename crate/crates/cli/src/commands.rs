use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::Args;
use glasslabel::camera::{calibrate as solve_calibration, parse_correspondences, CalibrationOptions, CameraError, Rig};
use glasslabel::dataset::{
    export_coco, heatmap_to_gray, label_scene, load_scene, parse_frame_id, parse_proposals, read_coco, read_color_png,
    read_heatmap, render_overlay, validate_coco_str, write_atomic, write_coco, write_heatmap, FrameFailure,
    ImageEntry, OverlayOptions, PipelineConfig, SceneReport,
};
use glasslabel::heatmap::render_heatmap;
use glasslabel::labeling::plugin::PluginProcess;
use glasslabel::labeling::ports::{MockSegmenter, MockVerifier, SegmenterPort, StageError, VerifierPort};
use glasslabel::labeling::protocol::{run_conformance, serve, MockPluginServer};
use glasslabel::labeling::{project_annotations, Annotation, FrameReport, Ports};
use glasslabel::pouring::{build_pouring_plan, PouringConfig, PouringPlan};
use glasslabel::synthetic::{write_scene, SceneWriteOptions, SyntheticScene};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::Global;

/// Process exit status of a failed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Validation = 1,
    Input = 2,
    Plugin = 3,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub source: anyhow::Error,
}

type Outcome = Result<(), Failure>;

trait Classify<T> {
    fn or_input(self, what: impl FnOnce() -> String) -> Result<T, Failure>;
    fn or_plugin(self, what: impl FnOnce() -> String) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_input(self, what: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| fail(Kind::Input, e.into().context(what())))
    }

    fn or_plugin(self, what: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| fail(Kind::Plugin, e.into().context(what())))
    }
}

fn fail(kind: Kind, source: anyhow::Error) -> Failure {
    Failure { kind, source }
}

fn load_config(g: &Global) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p).or_input(|| format!("loading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if g.strict {
        cfg.label.strict = true;
    }
    if let Some(seed) = g.seed {
        cfg.label.ransac.seed = seed;
    }
    Ok(cfg)
}

fn load_rig(path: &Path) -> Result<Rig, Failure> {
    Rig::load(path).or_input(|| format!("loading rig {}", path.display()))
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> Outcome {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    match path {
        Some(p) => write_atomic(p, text.as_bytes()).or_input(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Verifier and segmenter: plugin processes when configured, mocks otherwise.
struct PortSet {
    verifier: Box<dyn VerifierPort>,
    segmenter: Box<dyn SegmenterPort>,
}

impl PortSet {
    fn new(g: &Global, cfg: &PipelineConfig) -> Result<Self, Failure> {
        let timeout = Duration::from_secs_f64(cfg.plugin_timeout_s);
        let spawn = |cmd: &str| PluginProcess::spawn_with_timeout(cmd, timeout).or_plugin(|| format!("starting plugin '{cmd}'"));
        let verifier: Box<dyn VerifierPort> = match &g.plugin_verifier {
            Some(cmd) => Box::new(spawn(cmd)?),
            None => Box::new(MockVerifier::echo()),
        };
        let segmenter: Box<dyn SegmenterPort> = match &g.plugin_segmenter {
            Some(cmd) => Box::new(spawn(cmd)?),
            None => Box::new(MockSegmenter),
        };
        Ok(Self { verifier, segmenter })
    }

    fn ports(&self) -> Ports<'_> {
        Ports {
            verifier: self.verifier.as_ref(),
            segmenter: self.segmenter.as_ref(),
        }
    }
}

// ------------------------------------------------------------------ label

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Scene directory (`scene_<id>`).
    scene: PathBuf,
    /// COCO output file.
    #[arg(long, short)]
    out: PathBuf,
    /// Per-frame report (JSON); defaults to `<out>.report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Serialize)]
struct LabelReport<'a> {
    scene_id: &'a str,
    scene: &'a SceneReport,
    annotations: usize,
    images: usize,
    frames: &'a [FrameReport],
    failures: &'a [FrameFailure],
}

pub fn label(g: &Global, a: LabelArgs) -> Outcome {
    let cfg = load_config(g)?;
    let scene = load_scene(&a.scene).or_input(|| format!("loading scene {}", a.scene.display()))?;
    if scene.rig.is_none() {
        return Err(fail(Kind::Input, anyhow!("{} has no usable rig.toml", a.scene.display())));
    }
    let ports = PortSet::new(g, &cfg)?;
    let labels = label_scene(&scene, &cfg, ports.ports()).or_input(|| "labeling".into())?;
    let doc = export_coco(&labels.annotations, &labels.images, &cfg.classes).or_input(|| "exporting".into())?;
    write_coco(&doc, &a.out).or_input(|| format!("writing {}", a.out.display()))?;

    let report_path = a.report.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".report.json");
        PathBuf::from(p)
    });
    write_json(
        Some(&report_path),
        &LabelReport {
            scene_id: &scene.scene_id,
            scene: &scene.report,
            annotations: doc.annotations.len(),
            images: doc.images.len(),
            frames: &labels.reports,
            failures: &labels.failures,
        },
    )?;
    eprintln!(
        "scene {}: {} annotations on {} images, {} frame failures",
        scene.scene_id,
        doc.annotations.len(),
        doc.images.len(),
        labels.failures.len()
    );
    for f in &labels.failures {
        eprintln!("  {}: {}", f.frame, f.message);
    }
    if let Some(f) = labels.failures.iter().find(|f| f.plugin) {
        return Err(fail(Kind::Plugin, anyhow!("plugin failed on {}: {}", f.frame, f.message)));
    }
    let plugin_errors: usize = labels.reports.iter().map(|r| r.plugin_errors).sum();
    if plugin_errors > 0 {
        return Err(fail(Kind::Plugin, anyhow!("{plugin_errors} plugin calls failed; see {}", report_path.display())));
    }
    Ok(())
}

// ---------------------------------------------------------------- project

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// COCO file with labels of the source camera.
    coco: PathBuf,
    #[arg(long)]
    rig: PathBuf,
    /// Target camera (e.g. `left_eye`).
    #[arg(long)]
    to: String,
    /// Source camera.
    #[arg(long, default_value = "head_rgbd")]
    from: String,
    #[arg(long, short)]
    out: PathBuf,
}

pub fn project(g: &Global, a: ProjectArgs) -> Outcome {
    let cfg = load_config(g)?;
    let rig = load_rig(&a.rig)?;
    let table = rig.table.ok_or_else(|| fail(Kind::Input, anyhow!("rig has no table plane")))?;
    let doc = read_coco(&a.coco).or_input(|| format!("reading {}", a.coco.display()))?;
    let annotations: Vec<(u64, Annotation)> = doc.to_annotations();
    let mut images = doc.image_entries();
    let mut all: Vec<Annotation> = annotations.iter().map(|(_, ann)| ann.clone()).collect();
    let mut dropped = 0;

    for img in doc.images.iter().filter(|i| i.camera == a.from) {
        let pose = parse_frame_id(&img.frame_id).unwrap_or(0);
        let from = rig.frame_camera(&a.from, pose).or_input(|| format!("image {}", img.id))?;
        let to = rig.frame_camera(&a.to, pose).or_input(|| format!("image {}", img.id))?;
        let source: Vec<Annotation> = annotations
            .iter()
            .filter(|(_, ann)| ann.scene_id == img.scene_id && ann.frame_id == img.frame_id && ann.camera == img.camera)
            .map(|(_, ann)| ann.clone())
            .collect();
        let (mut moved, report) = project_annotations(&source, from, to, &table, &cfg.classes);
        for (i, why) in &report.dropped {
            eprintln!("image {} annotation {i}: not transferred ({why})", img.id);
        }
        dropped += report.dropped.len();
        for ann in &mut moved {
            ann.camera = a.to.clone();
        }
        all.extend(moved);
        images.push(ImageEntry {
            scene_id: img.scene_id.clone(),
            frame_id: img.frame_id.clone(),
            camera: a.to.clone(),
            file_name: img.file_name.replace(&format!("/{}/", a.from), &format!("/{}/", a.to)),
            width: to.width,
            height: to.height,
        });
    }
    let out = export_coco(&all, &images, &cfg.classes).or_input(|| "exporting".into())?;
    write_coco(&out, &a.out).or_input(|| format!("writing {}", a.out.display()))?;
    eprintln!(
        "{} annotations after projection to {}, {dropped} not transferred",
        out.annotations.len(),
        a.to
    );
    Ok(())
}

// ---------------------------------------------------------------- heatmap

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    /// JSON array of `{"center": [x, y], "score": s}`.
    proposals: PathBuf,
    #[arg(long)]
    width: u32,
    #[arg(long)]
    height: u32,
    /// Heatmap container output.
    #[arg(long, short)]
    out: PathBuf,
    /// Optional 8-bit visualization.
    #[arg(long)]
    png: Option<PathBuf>,
    /// Kernel size (odd); overrides the config.
    #[arg(long)]
    kernel: Option<u32>,
    /// Kernel standard deviation (px); overrides the config.
    #[arg(long)]
    sigma: Option<f64>,
}

pub fn heatmap(g: &Global, a: HeatmapArgs) -> Outcome {
    let cfg = load_config(g)?;
    let text = std::fs::read_to_string(&a.proposals).or_input(|| format!("reading {}", a.proposals.display()))?;
    let proposals = parse_proposals(&text).or_input(|| format!("parsing {}", a.proposals.display()))?;
    let k = a.kernel.unwrap_or(cfg.heatmap.kernel_size);
    let sigma = a.sigma.unwrap_or(cfg.heatmap.sigma);
    let map = render_heatmap(&proposals, a.width, a.height, k, sigma).or_input(|| "rendering heatmap".into())?;
    write_heatmap(&a.out, &map).or_input(|| format!("writing {}", a.out.display()))?;
    if let Some(png) = &a.png {
        heatmap_to_gray(&map).save(png).or_input(|| format!("writing {}", png.display()))?;
    }
    eprintln!("{} proposals, peak {:.6}", proposals.len(), map.max());
    Ok(())
}

// -------------------------------------------------------------- pour-plan

#[derive(Debug, Args)]
pub struct PourPlanArgs {
    coco: PathBuf,
    /// Annotation id in the COCO file.
    #[arg(long)]
    annotation: u64,
    #[arg(long)]
    rig: PathBuf,
    /// Pouring config (TOML); overrides the `[pouring]` section of `--config`.
    #[arg(long)]
    pouring: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PlanOutput<'a> {
    annotation_id: u64,
    image_id: u64,
    camera: &'a str,
    #[serde(flatten)]
    plan: &'a PouringPlan,
}

pub fn pour_plan(g: &Global, a: PourPlanArgs) -> Outcome {
    let cfg = load_config(g)?;
    let pouring = match &a.pouring {
        Some(p) => PouringConfig::load(p).or_input(|| format!("loading {}", p.display()))?,
        None => cfg.pouring.clone(),
    };
    let rig = load_rig(&a.rig)?;
    let table = rig.table.ok_or_else(|| fail(Kind::Input, anyhow!("rig has no table plane")))?;
    let doc = read_coco(&a.coco).or_input(|| format!("reading {}", a.coco.display()))?;
    let coco_ann = doc
        .annotations
        .iter()
        .find(|x| x.id == a.annotation)
        .ok_or_else(|| fail(Kind::Input, anyhow!("no annotation with id {}", a.annotation)))?;
    let (_, ann) = doc
        .to_annotations()
        .into_iter()
        .find(|(id, _)| *id == a.annotation)
        .ok_or_else(|| fail(Kind::Input, anyhow!("annotation {} refers to a missing image", a.annotation)))?;
    let class = cfg
        .class(ann.class_id)
        .ok_or_else(|| fail(Kind::Input, anyhow!("annotation {} is not a glass class ({})", a.annotation, ann.class_id)))?;
    let pose = parse_frame_id(&ann.frame_id).unwrap_or(0);
    let cam = rig.frame_camera(&ann.camera, pose).or_input(|| format!("annotation {}", a.annotation))?;
    let plan = build_pouring_plan(&ann, class, cam, &table, &pouring).or_input(|| "planning".into())?;
    if plan.outside_workspace {
        eprintln!("warning: glass lies outside the configured workspace");
    }
    write_json(
        a.out.as_deref(),
        &PlanOutput {
            annotation_id: a.annotation,
            image_id: coco_ann.image_id,
            camera: &ann.camera,
            plan: &plan,
        },
    )
}

// -------------------------------------------------------------- calibrate

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Rows of `u v X Y Z`.
    correspondences: PathBuf,
    /// Rig holding the initial guess.
    #[arg(long)]
    rig: PathBuf,
    /// Camera entry to refine.
    #[arg(long)]
    camera: String,
    /// Where to write the updated rig; only the refined entry is printed when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Refine only the pose.
    #[arg(long)]
    fix_intrinsics: bool,
}

pub fn calibrate(_g: &Global, a: CalibrateArgs) -> Outcome {
    let mut rig = load_rig(&a.rig)?;
    let text = std::fs::read_to_string(&a.correspondences).or_input(|| format!("reading {}", a.correspondences.display()))?;
    let data = parse_correspondences(&text).or_input(|| format!("parsing {}", a.correspondences.display()))?;
    let init = rig.camera(&a.camera).or_input(|| format!("rig {}", a.rig.display()))?.clone();
    let opts = CalibrationOptions {
        fix_intrinsics: a.fix_intrinsics,
        ..Default::default()
    };
    let result = match solve_calibration(&data, &init, &opts) {
        Ok(r) => r,
        Err(e @ CameraError::NonConvergence { .. }) => return Err(fail(Kind::Validation, e.into())),
        Err(e) => return Err(fail(Kind::Input, e.into())),
    };
    println!("camera {}: rms {:.6} px after {} iterations", a.camera, result.rms, result.iterations);
    let entry = Rig {
        cameras: vec![result.profile.clone()],
        table: None,
    };
    match &a.out {
        Some(out) => {
            rig.upsert(result.profile);
            write_atomic(out, rig.to_toml_string().as_bytes()).or_input(|| format!("writing {}", out.display()))
        }
        None => {
            print!("{}", entry.to_toml_string());
            Ok(())
        }
    }
}

// --------------------------------------------------------------- validate

#[derive(Debug, Args)]
pub struct ValidateArgs {
    coco: PathBuf,
}

pub fn validate(a: ValidateArgs) -> Outcome {
    let text = std::fs::read_to_string(&a.coco).or_input(|| format!("reading {}", a.coco.display()))?;
    let report = validate_coco_str(&text).or_input(|| format!("parsing {}", a.coco.display()))?;
    write_json(None, &report)?;
    if report.passed() {
        eprintln!("{}: valid", a.coco.display());
        Ok(())
    } else {
        Err(fail(Kind::Validation, anyhow!("{} violations", report.violations.len())))
    }
}

// ---------------------------------------------------------------- overlay

#[derive(Debug, Args)]
pub struct OverlayArgs {
    image: PathBuf,
    #[arg(long)]
    coco: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    /// COCO image id; matched by file name when omitted.
    #[arg(long)]
    image_id: Option<u64>,
    /// Heatmap container to blend underneath the boxes.
    #[arg(long)]
    heatmap: Option<PathBuf>,
    #[arg(long)]
    no_labels: bool,
    #[arg(long)]
    no_masks: bool,
}

pub fn overlay(g: &Global, a: OverlayArgs) -> Outcome {
    let cfg = load_config(g)?;
    let image = read_color_png(&a.image).or_input(|| format!("reading {}", a.image.display()))?;
    let doc = read_coco(&a.coco).or_input(|| format!("reading {}", a.coco.display()))?;
    let image_id = match a.image_id {
        Some(id) => id,
        None => {
            let path = a.image.to_string_lossy().replace('\\', "/");
            let hits: Vec<u64> = doc.images.iter().filter(|i| path.ends_with(&i.file_name)).map(|i| i.id).collect();
            match (hits.as_slice(), doc.images.as_slice()) {
                ([id], _) => *id,
                ([], [only]) => only.id,
                _ => return Err(fail(Kind::Input, anyhow!("cannot tell which COCO image this is; pass --image-id"))),
            }
        }
    };
    let meta = doc.image(image_id).ok_or_else(|| fail(Kind::Input, anyhow!("no image with id {image_id}")))?;
    let anns: Vec<Annotation> = doc
        .to_annotations()
        .into_iter()
        .filter(|(id, _)| doc.annotations.iter().any(|c| c.id == *id && c.image_id == image_id))
        .map(|(_, ann)| ann)
        .collect();
    if (meta.width, meta.height) != image.dimensions() {
        eprintln!("warning: image is {:?}, COCO says {}x{}", image.dimensions(), meta.width, meta.height);
    }
    let heat = match &a.heatmap {
        Some(p) => Some(read_heatmap(p).or_input(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let opts = OverlayOptions {
        labels: !a.no_labels,
        mask_outlines: !a.no_masks,
    };
    let out = render_overlay(&image, &anns, &cfg.classes, heat.as_ref(), &opts);
    out.save(&a.out).or_input(|| format!("writing {}", a.out.display()))?;
    eprintln!("{} annotations drawn", anns.len());
    Ok(())
}

// ----------------------------------------------------- plugin protocol

pub fn mock_plugin() -> Outcome {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(LineFlush(stdout.lock()));
    serve(&MockPluginServer::default(), stdin.lock(), &mut out).or_plugin(|| "serving".into())?;
    out.flush().or_plugin(|| "flushing".into())
}

/// Flushes after every newline so each response reaches the client at once.
struct LineFlush<W: Write>(W);

impl<W: Write> Write for LineFlush<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.0.write(buf)?;
        if buf[..n].contains(&b'\n') {
            self.0.flush()?;
        }
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.0.flush()
    }
}

#[derive(Debug, Args)]
pub struct ConformanceArgs {
    /// Plugin command to test; the built-in mock server when omitted.
    #[arg(long)]
    plugin: Option<String>,
    /// Per-request timeout (s).
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
}

pub fn conformance(a: ConformanceArgs) -> Outcome {
    let dir = tempfile::tempdir().or_input(|| "creating fixture directory".into())?;
    let report = match &a.plugin {
        Some(cmd) => {
            let plugin = PluginProcess::spawn_with_timeout(cmd, Duration::from_secs_f64(a.timeout))
                .or_plugin(|| format!("starting plugin '{cmd}'"))?;
            run_conformance(&mut |line: &str| plugin.roundtrip(line), dir.path())
        }
        None => {
            let server = MockPluginServer::default();
            run_conformance(&mut |line: &str| Ok::<_, StageError>(server.handle_line(line)), dir.path())
        }
    };
    for c in &report.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        if c.detail.is_empty() {
            println!("{status} {}", c.name);
        } else {
            println!("{status} {}: {}", c.name, c.detail);
        }
    }
    if report.passed() {
        Ok(())
    } else {
        Err(fail(Kind::Plugin, anyhow!("plugin is not protocol conformant")))
    }
}

// ------------------------------------------------------------------ synth

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory that receives `scene_<id>`.
    out: PathBuf,
    #[arg(long, default_value = "000")]
    scene_id: String,
    /// Use the fixed four-glass layout instead of a random scene.
    #[arg(long)]
    four: bool,
    #[arg(long, default_value_t = 4)]
    glasses: usize,
    /// Bottles and green decoys added to a random scene.
    #[arg(long, default_value_t = 0)]
    extras: usize,
    #[arg(long, default_value_t = 640)]
    width: u32,
    #[arg(long, default_value_t = 360)]
    height: u32,
    /// Standard deviation of depth noise (mm).
    #[arg(long, default_value_t = 0.0)]
    noise_mm: f64,
}

pub fn synth(g: &Global, a: SynthArgs) -> Outcome {
    let cfg = load_config(g)?;
    let seed = g.seed.unwrap_or(0);
    let scene = if a.four {
        if [1, 3, 4, 6].iter().any(|&id| cfg.class(id).is_none()) {
            return Err(fail(Kind::Input, anyhow!("the four-glass layout needs classes 1, 3, 4 and 6")));
        }
        SyntheticScene::four_glasses(&cfg.classes)
    } else {
        SyntheticScene::random(&mut ChaCha8Rng::seed_from_u64(seed), &cfg.classes, a.glasses, a.extras)
    };
    let opts = SceneWriteOptions {
        width: a.width,
        height: a.height,
        depth_noise_mm: a.noise_mm,
        seed,
    };
    std::fs::create_dir_all(&a.out).or_input(|| format!("creating {}", a.out.display()))?;
    let dir = write_scene(&a.out, &a.scene_id, &scene, &opts)
        .context("writing scene")
        .or_input(|| a.out.display().to_string())?;
    eprintln!("wrote {} with {} objects", dir.display(), scene.objects.len());
    Ok(())
}
