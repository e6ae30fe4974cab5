//! Heatmap container: `HMAP`, width and height as little-endian `u32`,
//! then `width × height` little-endian `f32` values row by row.

use std::path::Path;

use image::GrayImage;

use super::coco::write_atomic;
use super::DatasetError;
use crate::heatmap::{Heatmap, KeypointProposal};

pub const HEATMAP_MAGIC: &[u8; 4] = b"HMAP";

pub fn encode_heatmap(h: &Heatmap) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * h.values.len());
    out.extend_from_slice(HEATMAP_MAGIC);
    out.extend_from_slice(&h.width.to_le_bytes());
    out.extend_from_slice(&h.height.to_le_bytes());
    for v in &h.values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_heatmap(bytes: &[u8]) -> Result<Heatmap, DatasetError> {
    let bad = |m: &str| DatasetError::Parse(format!("heatmap container: {m}"));
    if bytes.len() < 12 || &bytes[..4] != HEATMAP_MAGIC {
        return Err(bad("missing magic"));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    let height = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    let n = width as usize * height as usize;
    if bytes.len() != 12 + 4 * n {
        return Err(bad("length does not match dimensions"));
    }
    let values = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok(Heatmap { width, height, values })
}

pub fn write_heatmap(path: &Path, h: &Heatmap) -> Result<(), DatasetError> {
    write_atomic(path, &encode_heatmap(h))
}

pub fn read_heatmap(path: &Path) -> Result<Heatmap, DatasetError> {
    decode_heatmap(&std::fs::read(path).map_err(|e| DatasetError::io(path, e))?)
}

/// 8-bit visualization scaled so the maximum maps to 255.
pub fn heatmap_to_gray(h: &Heatmap) -> GrayImage {
    let max = h.max();
    GrayImage::from_fn(h.width, h.height, |x, y| {
        let v = if max > 0.0 { h.get(x, y) / max } else { 0.0 };
        image::Luma([(v * 255.0).round() as u8])
    })
}

/// Proposals file: a JSON array of `{"center": [x, y], "score": s}`.
pub fn parse_proposals(text: &str) -> Result<Vec<KeypointProposal>, DatasetError> {
    serde_json::from_str(text).map_err(|e| DatasetError::Parse(format!("proposals: {e}")))
}
