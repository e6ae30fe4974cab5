//! Line-delimited JSON protocol spoken with verifier/segmenter plugin
//! processes over stdin/stdout, the built-in mock server, and the
//! conformance suite any plugin implementation must pass.
//!
//! Request:
//! `{"id": 1, "op": "verify"|"segment", "image_path": "...", "points": [[u, v], ...],
//!   "bbox_hint": [x, y, w, h] | null, "class_names": [...]}`
//!
//! Response: `{"id": 1, "ok": true, "detections": [{"bbox": [x, y, w, h], "score": s, "label": "..."}]}`
//! for `verify`, `{"id": 1, "ok": true, "mask_rle": {"size": [h, w], "counts": [...]}}` for
//! `segment`, and `{"id": 1 | null, "ok": false, "error": "..."}` on failure.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::ports::{
    Detection, MockSegmenter, MockVerifier, SegmentRequest, SegmenterPort, StageError, VerifierPort, VerifyRequest,
};
use super::{BBox, Mask, Rle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Verify,
    Segment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginRequest {
    pub id: u64,
    pub op: Op,
    pub image_path: PathBuf,
    #[serde(default)]
    pub points: Vec<[f64; 2]>,
    #[serde(default)]
    pub bbox_hint: Option<[f64; 4]>,
    #[serde(default)]
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDetection {
    pub bbox: [f64; 4],
    pub score: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginResponse {
    pub id: Option<u64>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<Vec<WireDetection>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_rle: Option<Rle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PluginResponse {
    pub fn failure(id: Option<u64>, error: impl Into<String>) -> Self {
        Self {
            id,
            ok: false,
            detections: None,
            mask_rle: None,
            error: Some(error.into()),
        }
    }
}

impl From<&Detection> for WireDetection {
    fn from(d: &Detection) -> Self {
        Self {
            bbox: d.bbox.as_array(),
            score: d.score,
            label: d.label.clone(),
        }
    }
}

impl From<&WireDetection> for Detection {
    fn from(d: &WireDetection) -> Self {
        Self {
            bbox: BBox::new(d.bbox[0], d.bbox[1], d.bbox[2], d.bbox[3]),
            score: d.score,
            label: d.label.clone(),
        }
    }
}

pub fn points_to_wire(points: &[Point2<f64>]) -> Vec<[f64; 2]> {
    points.iter().map(|p| [p.x, p.y]).collect()
}

/// Parses one response line and checks it against the request it answers.
/// `image_size` is `(width, height)` of the request image, used to check mask sizes.
pub fn check_response(req: &PluginRequest, line: &str, image_size: Option<(u32, u32)>) -> Result<PluginResponse, StageError> {
    let resp: PluginResponse =
        serde_json::from_str(line.trim()).map_err(|e| StageError::Protocol(format!("unparseable response: {e}")))?;
    if resp.id != Some(req.id) {
        return Err(StageError::Protocol(format!("response id {:?} does not echo request id {}", resp.id, req.id)));
    }
    if !resp.ok {
        return Err(StageError::Plugin(resp.error.unwrap_or_else(|| "unspecified error".into())));
    }
    match req.op {
        Op::Verify => {
            let dets = resp
                .detections
                .as_ref()
                .ok_or_else(|| StageError::Protocol("verify response lacks detections".into()))?;
            for d in dets {
                if !(0.0..=1.0).contains(&d.score) {
                    return Err(StageError::Protocol(format!("detection score {} outside [0, 1]", d.score)));
                }
                if !d.bbox.iter().all(|v| v.is_finite()) || d.bbox[2] < 0.0 || d.bbox[3] < 0.0 {
                    return Err(StageError::Protocol("detection bbox is not a valid (x, y, w, h)".into()));
                }
            }
        }
        Op::Segment => {
            let rle = resp
                .mask_rle
                .as_ref()
                .ok_or_else(|| StageError::Protocol("segment response lacks mask_rle".into()))?;
            Mask::from_rle(rle).map_err(|e| StageError::Protocol(e.to_string()))?;
            if let Some((w, h)) = image_size {
                if rle.size != [h, w] {
                    return Err(StageError::Protocol(format!(
                        "mask size {:?} does not match image {}x{}",
                        rle.size, w, h
                    )));
                }
            }
        }
    }
    Ok(resp)
}

/// Serves the protocol with the built-in mocks.
#[derive(Debug, Clone, Default)]
pub struct MockPluginServer {
    pub verifier: MockVerifier,
    pub segmenter: MockSegmenter,
}

impl MockPluginServer {
    pub fn handle_line(&self, line: &str) -> String {
        let resp = match serde_json::from_str::<PluginRequest>(line.trim()) {
            Ok(req) => self.handle(&req),
            Err(e) => {
                // echo the id when at least that much is readable
                let id = serde_json::from_str::<serde_json::Value>(line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|i| i.as_u64()));
                PluginResponse::failure(id, format!("malformed request: {e}"))
            }
        };
        serde_json::to_string(&resp).expect("response serializes")
    }

    pub fn handle(&self, req: &PluginRequest) -> PluginResponse {
        let image = match image::open(&req.image_path) {
            Ok(img) => img.to_rgb8(),
            Err(e) => return PluginResponse::failure(Some(req.id), format!("cannot read image: {e}")),
        };
        let points: Vec<Point2<f64>> = req.points.iter().map(|p| Point2::new(p[0], p[1])).collect();
        match req.op {
            Op::Verify => {
                let vreq = VerifyRequest {
                    image: &image,
                    image_path: Some(&req.image_path),
                    points: &points,
                    bbox_hint: req.bbox_hint.map(|b| BBox::new(b[0], b[1], b[2], b[3])),
                    class_names: &req.class_names,
                };
                match self.verifier.verify(&vreq) {
                    Ok(dets) => PluginResponse {
                        id: Some(req.id),
                        ok: true,
                        detections: Some(dets.iter().map(WireDetection::from).collect()),
                        mask_rle: None,
                        error: None,
                    },
                    Err(e) => PluginResponse::failure(Some(req.id), e.to_string()),
                }
            }
            Op::Segment => {
                let sreq = SegmentRequest {
                    image: &image,
                    image_path: Some(&req.image_path),
                    points: &points,
                };
                match self.segmenter.segment(&sreq) {
                    Ok(mask) => PluginResponse {
                        id: Some(req.id),
                        ok: true,
                        detections: None,
                        mask_rle: Some(mask.to_rle()),
                        error: None,
                    },
                    Err(e) => PluginResponse::failure(Some(req.id), e.to_string()),
                }
            }
        }
    }
}

/// Answers requests line by line until the input closes.
pub fn serve(server: &MockPluginServer, input: impl BufRead, mut output: impl Write) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(output, "{}", server.handle_line(&line))?;
        output.flush()?;
    }
    Ok(())
}

/// Outcome of one conformance check.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformanceCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConformanceReport {
    pub checks: Vec<ConformanceCheck>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }
}

pub const FIXTURE_WIDTH: u32 = 64;
pub const FIXTURE_HEIGHT: u32 = 48;

/// Writes the fixture image the conformance requests refer to.
pub fn write_conformance_fixture(dir: &Path) -> std::io::Result<PathBuf> {
    let path = dir.join("conformance_fixture.png");
    let img = image::RgbImage::from_fn(FIXTURE_WIDTH, FIXTURE_HEIGHT, |x, y| {
        if (20..40).contains(&x) && (10..40).contains(&y) {
            image::Rgb([40, 170, 70])
        } else {
            image::Rgb([150, 120, 90])
        }
    });
    img.save(&path).map_err(std::io::Error::other)?;
    Ok(path)
}

/// Runs the protocol conformance suite against `endpoint`, which sends one
/// request line and returns the response line.
pub fn run_conformance(
    endpoint: &mut dyn FnMut(&str) -> Result<String, StageError>,
    fixture_dir: &Path,
) -> ConformanceReport {
    let mut report = ConformanceReport::default();
    let image_path = match write_conformance_fixture(fixture_dir) {
        Ok(p) => p,
        Err(e) => {
            report.checks.push(ConformanceCheck {
                name: "fixture",
                passed: false,
                detail: e.to_string(),
            });
            return report;
        }
    };
    let size = Some((FIXTURE_WIDTH, FIXTURE_HEIGHT));
    let classes: Vec<String> = vec!["water glass".into(), "drink glass".into()];
    let square = vec![[20.0, 10.0], [39.0, 10.0], [39.0, 39.0], [20.0, 39.0], [30.0, 25.0]];

    let mut push = |name: &'static str, result: Result<(), String>| {
        report.checks.push(ConformanceCheck {
            name,
            passed: result.is_ok(),
            detail: result.err().unwrap_or_default(),
        });
    };

    let verify = PluginRequest {
        id: 101,
        op: Op::Verify,
        image_path: image_path.clone(),
        points: square.clone(),
        bbox_hint: Some([20.0, 10.0, 20.0, 30.0]),
        class_names: classes.clone(),
    };
    push("verify_with_hint", exchange(endpoint, &verify, size).map(|_| ()));

    let verify_no_hint = PluginRequest {
        id: 102,
        bbox_hint: None,
        ..verify.clone()
    };
    push("verify_without_hint", exchange(endpoint, &verify_no_hint, size).map(|_| ()));

    let segment = PluginRequest {
        id: 103,
        op: Op::Segment,
        image_path: image_path.clone(),
        points: square,
        bbox_hint: None,
        class_names: vec![],
    };
    push(
        "segment_rle_decodes",
        exchange(endpoint, &segment, size).and_then(|resp| {
            let mask = Mask::from_rle(resp.mask_rle.as_ref().expect("checked")).map_err(|e| e.to_string())?;
            let area = resp.mask_rle.as_ref().map(|r| r.area()).unwrap_or(0);
            if mask.count() as u64 != area || mask.is_empty() {
                return Err("decoded mask is empty or disagrees with RLE area".into());
            }
            for p in &segment.points {
                if !mask.get(p[0] as u32, p[1] as u32) {
                    return Err(format!("prompt point {p:?} not covered by mask"));
                }
            }
            Ok(())
        }),
    );

    push("malformed_request", expect_failure(endpoint, "{\"id\": 104, \"op\": ", None));
    push(
        "unknown_op",
        expect_failure(
            endpoint,
            &format!(
                "{{\"id\": 105, \"op\": \"classify\", \"image_path\": {}}}",
                serde_json::to_string(&image_path).expect("path serializes")
            ),
            Some(105),
        ),
    );
    let missing = PluginRequest {
        id: 106,
        image_path: fixture_dir.join("does_not_exist.png"),
        ..verify
    };
    push(
        "missing_image",
        expect_failure(endpoint, &serde_json::to_string(&missing).expect("request serializes"), Some(106)),
    );
    report
}

fn exchange(
    endpoint: &mut dyn FnMut(&str) -> Result<String, StageError>,
    req: &PluginRequest,
    size: Option<(u32, u32)>,
) -> Result<PluginResponse, String> {
    let line = serde_json::to_string(req).map_err(|e| e.to_string())?;
    let resp = endpoint(&line).map_err(|e| e.to_string())?;
    check_response(req, &resp, size).map_err(|e| e.to_string())
}

/// The response must parse, carry `ok = false`, and echo `id` when given.
fn expect_failure(
    endpoint: &mut dyn FnMut(&str) -> Result<String, StageError>,
    line: &str,
    id: Option<u64>,
) -> Result<(), String> {
    let raw = endpoint(line).map_err(|e| e.to_string())?;
    let resp: PluginResponse = serde_json::from_str(raw.trim()).map_err(|e| format!("unparseable response: {e}"))?;
    if resp.ok {
        return Err("plugin accepted an invalid request".into());
    }
    if id.is_some() && resp.id != id {
        return Err(format!("error response id {:?}, expected {:?}", resp.id, id));
    }
    Ok(())
}
