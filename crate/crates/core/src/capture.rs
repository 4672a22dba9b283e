//! Raw little-endian `f32` sample files with a JSON metadata sidecar:
//! `{"sample_rate_hz": 33330000.0, "format": "f32le", "num_samples": 20000}`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::{Origin, SampleBuffer};
use crate::error::{Error, Result};

pub const FORMAT_F32LE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureMeta {
    pub sample_rate_hz: f64,
    pub format: String,
    pub num_samples: usize,
}

/// `capture.f32` -> `capture.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn capture_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Capture {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn read_meta(meta_path: &Path) -> Result<CaptureMeta> {
    let text = fs::read_to_string(meta_path).map_err(|e| Error::io(meta_path, e))?;
    let meta: CaptureMeta =
        serde_json::from_str(&text).map_err(|e| capture_err(meta_path, format!("malformed metadata: {e}")))?;
    if meta.format != FORMAT_F32LE {
        return Err(capture_err(
            meta_path,
            format!("unsupported sample format {:?}, expected {FORMAT_F32LE:?}", meta.format),
        ));
    }
    if !(meta.sample_rate_hz.is_finite() && meta.sample_rate_hz > 0.0) {
        return Err(capture_err(meta_path, format!("bad sample_rate_hz {}", meta.sample_rate_hz)));
    }
    Ok(meta)
}

/// Loads a capture, checking its size against the sidecar and rejecting
/// non-finite samples.
pub fn ingest_capture(path: &Path, meta_path: &Path) -> Result<SampleBuffer> {
    let meta = read_meta(meta_path)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = meta.num_samples * 4;
    if bytes.len() != expected {
        return Err(capture_err(
            path,
            format!(
                "expected {expected} bytes ({} {FORMAT_F32LE} samples), found {}",
                meta.num_samples,
                bytes.len()
            ),
        ));
    }
    let mut samples = Vec::with_capacity(meta.num_samples);
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if !v.is_finite() {
            return Err(capture_err(
                path,
                format!("non-finite sample {v} at index {i} (byte offset {})", 4 * i),
            ));
        }
        samples.push(f64::from(v));
    }
    SampleBuffer::new(samples, meta.sample_rate_hz, Origin::File)
}

/// Writes samples (narrowed to `f32`) and the sidecar.
pub fn write_capture(buf: &SampleBuffer, path: &Path, meta_path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(buf.len() * 4);
    for &s in buf.samples() {
        bytes.extend_from_slice(&(s as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let meta = CaptureMeta {
        sample_rate_hz: buf.sample_rate_hz(),
        format: FORMAT_F32LE.into(),
        num_samples: buf.len(),
    };
    let text = serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n";
    fs::write(meta_path, text).map_err(|e| Error::io(meta_path, e))
}
