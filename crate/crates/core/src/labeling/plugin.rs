//! Client side of the plugin protocol: a long-running child process that
//! answers one request at a time.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use image::RgbImage;

use super::mask::Mask;
use super::ports::{Detection, SegmentRequest, SegmenterPort, StageError, VerifierPort, VerifyRequest};
use super::protocol::{check_response, points_to_wire, Op, PluginRequest};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

struct Channel {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    scratch: tempfile::TempDir,
}

/// A plugin process started from a shell command line. Requests are
/// serialized; one is in flight at a time.
pub struct PluginProcess {
    command: String,
    timeout: Duration,
    channel: Mutex<Channel>,
}

impl std::fmt::Debug for PluginProcess {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PluginProcess")
            .field("command", &self.command)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl PluginProcess {
    pub fn spawn(command: &str) -> Result<Self, StageError> {
        Self::spawn_with_timeout(command, DEFAULT_TIMEOUT)
    }

    pub fn spawn_with_timeout(command: &str, timeout: Duration) -> Result<Self, StageError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| StageError::Io(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let end = line.is_err();
                if tx.send(line).is_err() || end {
                    break;
                }
            }
        });
        let scratch = tempfile::tempdir().map_err(|e| StageError::Io(e.to_string()))?;
        Ok(Self {
            command: command.to_string(),
            timeout,
            channel: Mutex::new(Channel {
                child,
                stdin,
                lines: rx,
                next_id: 1,
                scratch,
            }),
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    /// Sends one raw line and waits for one response line.
    pub fn roundtrip(&self, line: &str) -> Result<String, StageError> {
        let mut ch = self.channel.lock().map_err(|_| StageError::Io("plugin channel poisoned".into()))?;
        Self::exchange(&mut ch, line, self.timeout)
    }

    fn exchange(ch: &mut Channel, line: &str, timeout: Duration) -> Result<String, StageError> {
        writeln!(ch.stdin, "{line}")
            .and_then(|_| ch.stdin.flush())
            .map_err(|e| StageError::Io(format!("write to plugin: {e}")))?;
        match ch.lines.recv_timeout(timeout) {
            Ok(Ok(resp)) => Ok(resp),
            Ok(Err(e)) => Err(StageError::Io(format!("read from plugin: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(StageError::Timeout(timeout.as_secs_f64())),
            Err(RecvTimeoutError::Disconnected) => Err(StageError::Io("plugin closed its output".into())),
        }
    }

    fn request(
        &self,
        op: Op,
        image: &RgbImage,
        image_path: Option<&Path>,
        points: Vec<[f64; 2]>,
        bbox_hint: Option<[f64; 4]>,
        class_names: Vec<String>,
    ) -> Result<super::protocol::PluginResponse, StageError> {
        let mut ch = self.channel.lock().map_err(|_| StageError::Io("plugin channel poisoned".into()))?;
        let id = ch.next_id;
        ch.next_id += 1;
        let image_path: PathBuf = match image_path {
            Some(p) => p.to_path_buf(),
            None => {
                let p = ch.scratch.path().join("request.png");
                image.save(&p).map_err(|e| StageError::Io(format!("write request image: {e}")))?;
                p
            }
        };
        let req = PluginRequest {
            id,
            op,
            image_path,
            points,
            bbox_hint,
            class_names,
        };
        let line = serde_json::to_string(&req).map_err(|e| StageError::InvalidRequest(e.to_string()))?;
        let resp = Self::exchange(&mut ch, &line, self.timeout)?;
        check_response(&req, &resp, Some((image.width(), image.height())))
    }
}

impl Drop for PluginProcess {
    fn drop(&mut self) {
        if let Ok(ch) = self.channel.get_mut() {
            let _ = ch.child.kill();
            let _ = ch.child.wait();
        }
    }
}

impl VerifierPort for PluginProcess {
    fn verify(&self, req: &VerifyRequest<'_>) -> Result<Vec<Detection>, StageError> {
        let resp = self.request(
            Op::Verify,
            req.image,
            req.image_path,
            points_to_wire(req.points),
            req.bbox_hint.map(|b| b.as_array()),
            req.class_names.to_vec(),
        )?;
        Ok(resp.detections.unwrap_or_default().iter().map(Detection::from).collect())
    }
}

impl SegmenterPort for PluginProcess {
    fn segment(&self, req: &SegmentRequest<'_>) -> Result<Mask, StageError> {
        let resp = self.request(
            Op::Segment,
            req.image,
            req.image_path,
            points_to_wire(req.points),
            None,
            Vec::new(),
        )?;
        let rle = resp
            .mask_rle
            .ok_or_else(|| StageError::Protocol("segment response lacks mask_rle".into()))?;
        Mask::from_rle(&rle).map_err(|e| StageError::Protocol(e.to_string()))
    }
}
